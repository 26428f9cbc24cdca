#include "cryptotensors/bytes.hpp"

#include <openssl/evp.h>

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <random>

#include "cryptotensors/error.hpp"

namespace ct {
namespace {

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

}  // namespace

std::string base64_encode(ByteView data) {
    std::string out(4 * ((data.size() + 2) / 3), '\0');
    if (data.empty()) return out;
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data.data(), static_cast<int>(data.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

Bytes base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) throw Error(Errc::InvalidArgument, "base64 length is not a multiple of 4");
    if (text.empty()) return {};
    Bytes out(text.size() / 4 * 3);
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
    if (n < 0) throw Error(Errc::InvalidArgument, "invalid base64");
    std::size_t pad = 0;
    if (text.back() == '=') ++pad;
    if (text.size() >= 2 && text[text.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    // EVP_DecodeBlock tolerates whitespace, stray padding and non-zero trailing bits; only the
    // canonical encoding is accepted here.
    if (base64_encode(out) != text) throw Error(Errc::InvalidArgument, "non-canonical base64");
    return out;
}

std::string hex_encode(ByteView data) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(data.size() * 2);
    for (auto b : data) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 15]);
    }
    return out;
}

Bytes hex_decode(std::string_view text) {
    if (text.size() % 2 != 0) throw Error(Errc::InvalidArgument, "odd-length hex string");
    Bytes out(text.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const int hi = hex_value(text[2 * i]);
        const int lo = hex_value(text[2 * i + 1]);
        if (hi < 0 || lo < 0) throw Error(Errc::InvalidArgument, "invalid hex digit");
        out[i] = static_cast<std::uint8_t>(hi << 4 | lo);
    }
    return out;
}

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = in.tellg();
    if (size < 0) throw Error(Errc::IoError, "cannot size " + path.string());
    in.seekg(0);
    Bytes out(static_cast<std::size_t>(size));
    if (!out.empty() && !in.read(reinterpret_cast<char*>(out.data()), size)) {
        throw Error(Errc::IoError, "short read on " + path.string());
    }
    return out;
}

void write_file_atomic(const std::filesystem::path& path, ByteView data, bool owner_only) {
    const ByteView parts[] = {data};
    write_file_atomic(path, parts, owner_only);
}

void write_file_atomic(const std::filesystem::path& path, std::span<const ByteView> parts, bool owner_only) {
    std::random_device rd;
    auto tmp = path;
    tmp += ".tmp." + std::to_string(rd());
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, owner_only ? 0600 : 0644);
    if (fd < 0) throw Error(Errc::IoError, "cannot create " + tmp.string() + ": " + std::strerror(errno));
    const auto fail = [&](const std::string& what) {
        const int err = errno;
        ::close(fd);
        ::unlink(tmp.c_str());
        throw Error(Errc::IoError, what + " " + path.string() + ": " + std::strerror(err));
    };
    for (const auto data : parts) {
        std::size_t done = 0;
        while (done < data.size()) {
            const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
            if (n < 0) {
                if (errno == EINTR) continue;
                fail("write failed for");
            }
            done += static_cast<std::size_t>(n);
        }
    }
    if (::fsync(fd) != 0) fail("fsync failed for");
    if (::close(fd) != 0) {
        ::unlink(tmp.c_str());
        throw Error(Errc::IoError, "close failed for " + path.string());
    }
    if (::rename(tmp.c_str(), path.c_str()) != 0) {
        const int err = errno;
        ::unlink(tmp.c_str());
        throw Error(Errc::IoError, "rename failed for " + path.string() + ": " + std::strerror(err));
    }
}

}  // namespace ct
