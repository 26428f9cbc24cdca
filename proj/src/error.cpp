#include "cryptotensors/error.hpp"

namespace ct {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::TruncatedFile: return "TruncatedFile";
        case Errc::HeaderTooLarge: return "HeaderTooLarge";
        case Errc::MalformedJson: return "MalformedJson";
        case Errc::InvalidDtype: return "InvalidDtype";
        case Errc::LayoutError: return "LayoutError";
        case Errc::DuplicateName: return "DuplicateName";
        case Errc::NameNotUtf8: return "NameNotUtf8";
        case Errc::SignaturePresent: return "SignaturePresent";
        case Errc::Overflow: return "Overflow";
        case Errc::MalformedMetadata: return "MalformedMetadata";
        case Errc::RandomnessUnavailable: return "RandomnessUnavailable";
        case Errc::AuthenticationFailed: return "AuthenticationFailed";
        case Errc::MalformedSignature: return "MalformedSignature";
        case Errc::UnsupportedAlgorithm: return "UnsupportedAlgorithm";
        case Errc::InvalidArgument: return "InvalidArgument";
        case Errc::MalformedKeyRef: return "MalformedKeyRef";
        case Errc::UnsupportedScheme: return "UnsupportedScheme";
        case Errc::NotFound: return "NotFound";
        case Errc::NetworkError: return "NetworkError";
        case Errc::KbsDenied: return "KbsDenied";
        case Errc::KbsSignatureRejected: return "KbsSignatureRejected";
        case Errc::MalformedResponse: return "MalformedResponse";
        case Errc::LengthMismatch: return "LengthMismatch";
        case Errc::UntrustedSigningKey: return "UntrustedSigningKey";
        case Errc::MalformedPolicy: return "MalformedPolicy";
        case Errc::UnknownOperator: return "UnknownOperator";
        case Errc::UnsupportedLanguage: return "UnsupportedLanguage";
        case Errc::ProviderFailure: return "ProviderFailure";
        case Errc::UnknownTensorInSelection: return "UnknownTensorInSelection";
        case Errc::MetadataKeyCollision: return "MetadataKeyCollision";
        case Errc::SizeMismatch: return "SizeMismatch";
        case Errc::IoError: return "IoError";
        case Errc::SignatureInvalid: return "SignatureInvalid";
        case Errc::PolicyDenied: return "PolicyDenied";
        case Errc::MissingEncryptionRecord: return "MissingEncryptionRecord";
        case Errc::PlainFileRejected: return "PlainFileRejected";
        case Errc::UnknownTensor: return "UnknownTensor";
        case Errc::RangeOutOfBounds: return "RangeOutOfBounds";
        case Errc::MasterKeyUnavailable: return "MasterKeyUnavailable";
        case Errc::MalformedRequest: return "MalformedRequest";
        case Errc::UnknownKeyId: return "UnknownKeyId";
        case Errc::MalformedKeystore: return "MalformedKeystore";
        case Errc::BadKeyLength: return "BadKeyLength";
    }
    return "Unknown";
}

std::string_view layout_issue_name(LayoutIssue issue) noexcept {
    switch (issue) {
        case LayoutIssue::Overlap: return "Overlap";
        case LayoutIssue::Gap: return "Gap";
        case LayoutIssue::OutOfBounds: return "OutOfBounds";
        case LayoutIssue::SizeMismatch: return "SizeMismatch";
    }
    return "Unknown";
}

}  // namespace ct
