#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cryptotensors/loader.hpp"
#include "cryptotensors/serializer.hpp"

namespace ct::testing {

class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

struct TestKeys {
    crypto::MasterKey master;
    crypto::SignKeyPair signer;
    keys::CryptoKeysMeta meta;
};

/// Deterministic keys; the descriptors point at file:// URIs that do not exist.
TestKeys make_keys(std::uint64_t seed = 7);

SerializeConfig make_config(const TestKeys& keys, EncryptSelection selection = EncryptSelection::all(),
                            crypto::RandomSource* random = nullptr);

/// Pins the signer, supplies the master key out of band, fixes measurements to `m`.
OpenOptions open_options(const TestKeys& keys, policy::Measurements m = {});

/// A tensor table that owns its bytes.
struct Table {
    std::vector<std::string> names;
    std::vector<Bytes> data;
    std::vector<format::Dtype> dtypes;
    std::vector<format::Shape> shapes;

    std::vector<TensorInput> inputs() const;
};

/// Random names, dtypes and shapes (up to max_elements elements per tensor, zero-size
/// tensors included), random contents.
Table random_table(std::mt19937_64& rng, std::size_t count, std::uint64_t max_elements);

/// `count` U8 tensors named t000.. with `bytes` random bytes each.
Table uniform_table(std::mt19937_64& rng, std::size_t count, std::uint64_t bytes);

void write_bytes(const std::filesystem::path& path, ByteView data);

/// File offset of the header JSON's first byte.
inline constexpr std::size_t kHeaderStart = 8;

}  // namespace ct::testing
