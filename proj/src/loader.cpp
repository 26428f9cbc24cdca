#include "cryptotensors/loader.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cstring>
#include <mutex>
#include <unordered_map>

#include "cryptotensors/error.hpp"

namespace ct {
namespace {

class Mapping {
public:
    explicit Mapping(const std::filesystem::path& path) {
        const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
        if (fd < 0) throw Error(Errc::IoError, "cannot open " + path.string() + ": " + std::strerror(errno));
        struct stat st {};
        if (::fstat(fd, &st) != 0) {
            ::close(fd);
            throw Error(Errc::IoError, "cannot stat " + path.string());
        }
        size_ = static_cast<std::size_t>(st.st_size);
        if (size_ < 8) {
            ::close(fd);
            throw Error(Errc::TruncatedFile, path.string() + " is shorter than the 8-byte length prefix");
        }
        addr_ = ::mmap(nullptr, size_, PROT_READ, MAP_PRIVATE, fd, 0);
        ::close(fd);
        if (addr_ == MAP_FAILED) throw Error(Errc::IoError, "cannot map " + path.string() + ": " + std::strerror(errno));
    }
    Mapping(const Mapping&) = delete;
    Mapping& operator=(const Mapping&) = delete;
    ~Mapping() { ::munmap(addr_, size_); }

    ByteView bytes() const noexcept { return {static_cast<const std::uint8_t*>(addr_), size_}; }

private:
    void* addr_ = nullptr;
    std::size_t size_ = 0;
};

struct Slot {
    std::mutex mutex;
    std::shared_ptr<const Bytes> plaintext;
    std::size_t decrypts = 0;
};

bool signature_stage_error(Errc code) {
    switch (code) {
        case Errc::MalformedMetadata:
        case Errc::MalformedKeyRef:
        case Errc::UnsupportedScheme:
        case Errc::UnsupportedAlgorithm:
        case Errc::UntrustedSigningKey:
        case Errc::MalformedSignature:
        case Errc::LengthMismatch: return true;
        default: return false;
    }
}

void copy_slice(ByteView src, const format::Shape& shape, std::span<const SliceRange> ranges, std::size_t elem,
                std::uint8_t* dst) {
    const std::size_t rank = shape.size();
    std::vector<std::uint64_t> stride(rank, 1);
    for (std::size_t i = rank; i-- > 1;) stride[i - 1] = stride[i] * shape[i];

    // Innermost dimension that is not taken whole; everything after it is contiguous.
    std::size_t split = 0;
    for (std::size_t i = rank; i-- > 0;) {
        if (ranges[i].first != 0 || ranges[i].second != shape[i]) {
            split = i;
            break;
        }
    }
    const std::uint64_t run = (ranges[split].second - ranges[split].first) * stride[split] * elem;
    std::vector<std::uint64_t> idx(split);
    for (std::size_t i = 0; i < split; ++i) idx[i] = ranges[i].first;
    while (true) {
        std::uint64_t offset = ranges[split].first * stride[split];
        for (std::size_t i = 0; i < split; ++i) offset += idx[i] * stride[i];
        std::memcpy(dst, src.data() + offset * elem, run);
        dst += run;
        std::size_t k = split;
        while (k > 0) {
            --k;
            if (++idx[k] < ranges[k].second) break;
            idx[k] = ranges[k].first;
            if (k == 0) return;
        }
        if (split == 0) return;
    }
}

}  // namespace

struct LoadHandle::State {
    std::shared_ptr<Mapping> mapping;
    format::ParsedFile parsed;
    std::unordered_map<std::string, std::size_t> index;
    std::optional<keys::CryptoKeysMeta> keys;
    policy::PolicyDoc policy;
    EncryptionTable records;
    std::optional<crypto::MasterKey> master;
    std::map<std::string, std::unique_ptr<Slot>, std::less<>> slots;
    mutable std::atomic<std::uint64_t> bytes_read{0};
    keys::EventSink on_event;

    void emit(std::string_view e) const {
        if (on_event) on_event(e);
    }

    const format::TensorInfo& info(std::string_view name) const {
        const auto it = index.find(std::string(name));
        if (it == index.end()) throw Error(Errc::UnknownTensor, "no tensor named '" + std::string(name) + "'");
        return parsed.header.tensors[it->second];
    }

    ByteView body_range(const format::TensorInfo& t) const {
        return parsed.raw.body.subspan(static_cast<std::size_t>(t.begin), static_cast<std::size_t>(t.byte_len()));
    }
};

LoadHandle::LoadHandle(std::unique_ptr<State> state) : state_(std::move(state)) {}
LoadHandle::LoadHandle(LoadHandle&&) noexcept = default;
LoadHandle& LoadHandle::operator=(LoadHandle&&) noexcept = default;
LoadHandle::~LoadHandle() = default;

LoadHandle LoadHandle::open(const std::filesystem::path& path, OpenOptions options) {
    auto st = std::make_unique<State>();
    st->on_event = options.on_event;
    st->mapping = std::make_shared<Mapping>(path);

    auto& parsed = st->parsed;
    parsed.raw = format::split_file(st->mapping->bytes(), options.parse);
    parsed.header = format::decode_header_json(as_chars(parsed.raw.header_bytes));
    for (std::size_t i = 0; i < parsed.header.tensors.size(); ++i) st->index.emplace(parsed.header.tensors[i].name, i);

    if (!is_protected(parsed.header)) {
        format::validate_layout(parsed.header, parsed.raw.body.size());
        if (!options.allow_plain) throw Error(Errc::PlainFileRejected, path.string() + " is not encrypted");
        return LoadHandle(std::move(st));
    }

    const auto& md = parsed.header.metadata;
    if (options.on_event && !options.resolver.on_event) options.resolver.on_event = options.on_event;
    keys::KeyResolver resolver(std::move(options.resolver));

    // 1. signature: nothing else in the header is trusted until it verifies
    try {
        const auto ck = md.find(std::string(format::kCryptoKeysKey));
        if (ck == md.end()) throw Error(Errc::MalformedMetadata, "reserved keys present without __crypto_keys__");
        const auto sign_ref = keys::CryptoKeysMeta::parse_sign_ref(ck->second);
        crypto::require_sign_alg(sign_ref.alg);
        const auto pub = resolver.resolve_signing_key(sign_ref);
        st->emit("verify_signature");
        if (!verify_header_signature(parsed.header, pub)) {
            throw Error(Errc::SignatureInvalid, "header signature does not verify");
        }
    } catch (const Error& e) {
        if (!signature_stage_error(e.code())) throw;
        throw Error(Errc::SignatureInvalid, e.what());
    }

    st->keys = keys::CryptoKeysMeta::parse(md.at(std::string(format::kCryptoKeysKey)));
    if (const auto it = md.find(std::string(format::kPolicyKey)); it != md.end()) {
        st->policy = policy::PolicyDoc::parse(it->second);
    }
    const auto enc = md.find(std::string(format::kEncryptionKey));
    if (enc == md.end()) throw Error(Errc::MissingEncryptionRecord, "protected file has no __encryption__ field");
    st->records = parse_encryption_table(enc->second);
    for (const auto& [name, record] : st->records) {
        if (st->index.count(name) == 0) {
            throw Error(Errc::MalformedMetadata, "encryption record for unknown tensor '" + name + "'");
        }
        st->slots.emplace(name, std::make_unique<Slot>());
    }
    format::validate_layout(parsed.header, parsed.raw.body.size());

    // 2. local policy
    const auto clock = options.clock ? options.clock : policy::system_clock();
    const auto provider = options.measurements ? options.measurements : policy::default_provider(clock);
    const auto measurements = policy::collect_measurements(provider);
    policy::PolicyEngine engine;
    for (auto& [lang, evaluator] : options.policy_evaluators) engine.register_evaluator(lang, evaluator);
    st->emit("evaluate_local_policy");
    const auto decision = engine.evaluate(st->policy.local, measurements, clock());
    if (!decision.allow) throw Error(Errc::PolicyDenied, decision.reason);

    // 3. master key, once, only if something needs it
    if (options.resolve_master_key && !st->records.empty()) {
        const keys::KbsContext kbs{parsed.raw.header_bytes, measurements};
        try {
            st->master = resolver.resolve_master_key(st->keys->enc, &kbs);
        } catch (const Error& e) {
            if (e.code() == Errc::KbsDenied) throw Error(Errc::PolicyDenied, e.detail());
            throw;
        }
    }
    return LoadHandle(std::move(st));
}

bool LoadHandle::is_encrypted() const noexcept { return state_->keys.has_value(); }
bool LoadHandle::has_master_key() const noexcept { return state_->master.has_value(); }

std::vector<std::string> LoadHandle::names() const {
    std::vector<std::string> out;
    out.reserve(state_->parsed.header.tensors.size());
    for (const auto& t : state_->parsed.header.tensors) out.push_back(t.name);
    return out;
}

const format::TensorInfo& LoadHandle::tensor_info(std::string_view name) const { return state_->info(name); }

format::Metadata LoadHandle::metadata() const {
    format::Metadata out;
    for (const auto& [k, v] : state_->parsed.header.metadata) {
        if (!format::is_reserved_key(k)) out.emplace(k, v);
    }
    return out;
}

const format::Metadata& LoadHandle::raw_metadata() const noexcept { return state_->parsed.header.metadata; }
const format::Header& LoadHandle::header() const noexcept { return state_->parsed.header; }
const std::optional<keys::CryptoKeysMeta>& LoadHandle::crypto_keys() const noexcept { return state_->keys; }
const policy::PolicyDoc& LoadHandle::policy() const noexcept { return state_->policy; }

bool LoadHandle::is_tensor_encrypted(std::string_view name) const {
    state_->info(name);
    return state_->slots.find(name) != state_->slots.end();
}

Tensor LoadHandle::get_tensor(std::string_view name) const {
    const auto& info = state_->info(name);
    const auto slot_it = state_->slots.find(name);
    if (slot_it == state_->slots.end()) {
        const auto view = state_->body_range(info);
        state_->bytes_read += view.size();
        return {info.dtype, info.shape, view, state_->mapping};
    }

    auto& slot = *slot_it->second;
    std::lock_guard lock(slot.mutex);
    if (!slot.plaintext) {
        if (!state_->master) throw Error(Errc::MasterKeyUnavailable, "master key was not resolved for this handle");
        const auto& record = state_->records.at(info.name);
        const auto aad = as_bytes(info.name);
        state_->emit("unwrap_dek:" + info.name);
        const auto dek = crypto::unwrap_dek(*state_->master, record.dek, aad);
        state_->emit("decrypt:" + info.name);
        const auto ciphertext = state_->body_range(info);
        auto plaintext = std::make_shared<Bytes>(ciphertext.size());
        crypto::aead_decrypt_into(dek.view(), record.iv, aad, ciphertext, record.tag, *plaintext);
        state_->bytes_read += ciphertext.size();
        ++slot.decrypts;
        slot.plaintext = std::move(plaintext);
    }
    return {info.dtype, info.shape, *slot.plaintext, slot.plaintext};
}

Tensor LoadHandle::get_slice(std::string_view name, std::span<const SliceRange> ranges) const {
    const auto& info = state_->info(name);
    const auto rank = info.shape.size();
    if (ranges.size() > rank) {
        throw Error(Errc::RangeOutOfBounds, "tensor '" + info.name + "' has rank " + std::to_string(rank));
    }
    std::vector<SliceRange> full(rank);
    format::Shape out_shape(rank);
    bool whole = true;
    for (std::size_t i = 0; i < rank; ++i) {
        full[i] = i < ranges.size() ? ranges[i] : SliceRange{0, info.shape[i]};
        if (full[i].first > full[i].second || full[i].second > info.shape[i]) {
            throw Error(Errc::RangeOutOfBounds, "range [" + std::to_string(full[i].first) + ", " +
                                                    std::to_string(full[i].second) + ") outside dimension " +
                                                    std::to_string(i) + " of size " + std::to_string(info.shape[i]));
        }
        out_shape[i] = full[i].second - full[i].first;
        whole = whole && full[i].first == 0 && full[i].second == info.shape[i];
    }
    if (whole) return get_tensor(name);

    const auto elem = format::element_size(info.dtype);
    const auto out_len = format::tensor_byte_len(info.dtype, out_shape);
    auto buffer = std::make_shared<Bytes>(static_cast<std::size_t>(out_len));
    if (out_len != 0) {
        if (is_tensor_encrypted(name)) {
            const auto t = get_tensor(name);
            copy_slice(t.data, info.shape, full, elem, buffer->data());
        } else {
            copy_slice(state_->body_range(info), info.shape, full, elem, buffer->data());
            state_->bytes_read += out_len;
        }
    }
    return {info.dtype, std::move(out_shape), *buffer, buffer};
}

std::map<std::string, std::size_t> LoadHandle::decrypt_stats() const {
    std::map<std::string, std::size_t> out;
    for (const auto& [name, slot] : state_->slots) {
        std::lock_guard lock(slot->mutex);
        out.emplace(name, slot->decrypts);
    }
    return out;
}

void LoadHandle::release(std::string_view name) {
    state_->info(name);
    const auto it = state_->slots.find(name);
    if (it == state_->slots.end()) return;
    std::lock_guard lock(it->second->mutex);
    it->second->plaintext.reset();
}

std::size_t LoadHandle::cached_bytes() const {
    std::size_t total = 0;
    for (const auto& [name, slot] : state_->slots) {
        std::lock_guard lock(slot->mutex);
        if (slot->plaintext) total += slot->plaintext->size();
    }
    return total;
}

std::uint64_t LoadHandle::body_bytes_read() const { return state_->bytes_read.load(); }

}  // namespace ct
