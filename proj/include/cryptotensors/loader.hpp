#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cryptotensors/envelope.hpp"
#include "cryptotensors/format.hpp"
#include "cryptotensors/keys.hpp"
#include "cryptotensors/policy.hpp"

namespace ct {

struct OpenOptions {
    keys::ResolverOptions resolver;
    /// Defaults to policy::default_provider(clock).
    policy::MeasurementProvider measurements;
    /// Defaults to the system clock.
    policy::Clock clock;
    /// Evaluators for policy languages other than ct-json-v1.
    std::map<std::string, policy::ExternalEvaluator> policy_evaluators;
    /// Accept files without "__crypto_keys__".
    bool allow_plain = true;
    /// When false the master key is never fetched and encrypted tensors fail with
    /// MasterKeyUnavailable (header-only inspection).
    bool resolve_master_key = true;
    format::ParseOptions parse;
    /// Receives the verification steps in order: "resolve_signing_key", "verify_signature",
    /// "evaluate_local_policy", "resolve_master_key", then per tensor "unwrap_dek:<name>"
    /// and "decrypt:<name>". Resolver events are forwarded here too.
    keys::EventSink on_event;
};

/// A tensor's bytes. For plain tensors `data` points into the file mapping; for
/// encrypted ones into the handle's plaintext cache. `owner` keeps either alive.
struct Tensor {
    format::Dtype dtype = format::Dtype::U8;
    format::Shape shape;
    ByteView data;
    std::shared_ptr<const void> owner;
};

/// Half-open [begin, end) per dimension. Trailing dimensions left out are taken whole.
using SliceRange = std::pair<std::uint64_t, std::uint64_t>;

/// An open container. Safe to share across threads for reads; each encrypted tensor
/// is decrypted at most once (until release()).
class LoadHandle {
public:
    /// Parses the header, verifies the signature, evaluates the local policy and resolves
    /// the master key, in that order. No tensor bytes are read or decrypted.
    static LoadHandle open(const std::filesystem::path& path, OpenOptions options = {});

    LoadHandle(LoadHandle&&) noexcept;
    LoadHandle& operator=(LoadHandle&&) noexcept;
    ~LoadHandle();

    bool is_encrypted() const noexcept;
    bool has_master_key() const noexcept;

    /// Tensor names in offset order.
    std::vector<std::string> names() const;
    /// Throws Error{UnknownTensor}.
    const format::TensorInfo& tensor_info(std::string_view name) const;
    /// User metadata, with the four reserved keys removed.
    format::Metadata metadata() const;
    const format::Metadata& raw_metadata() const noexcept;
    const format::Header& header() const noexcept;
    const std::optional<keys::CryptoKeysMeta>& crypto_keys() const noexcept;
    const policy::PolicyDoc& policy() const noexcept;
    bool is_tensor_encrypted(std::string_view name) const;

    Tensor get_tensor(std::string_view name) const;
    /// Throws Error{RangeOutOfBounds}; encrypted tensors are decrypted whole first.
    Tensor get_slice(std::string_view name, std::span<const SliceRange> ranges) const;

    /// Per encrypted tensor, how many times it has been decrypted.
    std::map<std::string, std::size_t> decrypt_stats() const;
    /// Drops a cached plaintext; a later access decrypts again.
    void release(std::string_view name);
    /// Bytes of plaintext currently cached.
    std::size_t cached_bytes() const;
    /// Body bytes handed out or decrypted through this handle since open().
    std::uint64_t body_bytes_read() const;

private:
    struct State;
    explicit LoadHandle(std::unique_ptr<State> state);
    std::unique_ptr<State> state_;
};

}  // namespace ct
