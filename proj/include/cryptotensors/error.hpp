#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ct {

/// Every failure the library reports carries one of these codes. The names
/// are stable; tests and the CLI exit-code mapping depend on them.
enum class Errc {
    // container format
    TruncatedFile,
    HeaderTooLarge,
    MalformedJson,
    InvalidDtype,
    LayoutError,
    DuplicateName,
    NameNotUtf8,
    SignaturePresent,
    Overflow,
    MalformedMetadata,
    // crypto
    RandomnessUnavailable,
    AuthenticationFailed,
    MalformedSignature,
    UnsupportedAlgorithm,
    InvalidArgument,
    // key resolution
    MalformedKeyRef,
    UnsupportedScheme,
    NotFound,
    NetworkError,
    KbsDenied,
    KbsSignatureRejected,
    MalformedResponse,
    LengthMismatch,
    UntrustedSigningKey,
    // policy
    MalformedPolicy,
    UnknownOperator,
    UnsupportedLanguage,
    ProviderFailure,
    // serializer
    UnknownTensorInSelection,
    MetadataKeyCollision,
    SizeMismatch,
    IoError,
    // loader
    SignatureInvalid,
    PolicyDenied,
    MissingEncryptionRecord,
    PlainFileRejected,
    UnknownTensor,
    RangeOutOfBounds,
    MasterKeyUnavailable,
    // kbs service
    MalformedRequest,
    UnknownKeyId,
    MalformedKeystore,
    BadKeyLength,
};

enum class LayoutIssue { Overlap, Gap, OutOfBounds, SizeMismatch };

std::string_view errc_name(Errc code) noexcept;
std::string_view layout_issue_name(LayoutIssue issue) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code), detail_(message) {}

    Error(LayoutIssue issue, const std::string& message)
        : std::runtime_error(std::string("LayoutError::") + std::string(layout_issue_name(issue)) + ": " + message),
          code_(Errc::LayoutError), layout_(issue), detail_(message) {}

    Errc code() const noexcept { return code_; }
    std::optional<LayoutIssue> layout_issue() const noexcept { return layout_; }
    /// The message without the code prefix (for KbsDenied/PolicyDenied this is the policy reason).
    const std::string& detail() const noexcept { return detail_; }

private:
    Errc code_;
    std::optional<LayoutIssue> layout_;
    std::string detail_;
};

}  // namespace ct
