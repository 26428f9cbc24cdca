#include "cli.hpp"

#include <signal.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cryptotensors/bench.hpp"
#include "cryptotensors/error.hpp"
#include "cryptotensors/kbs_service.hpp"
#include "cryptotensors/loader.hpp"
#include "cryptotensors/serializer.hpp"

namespace ct::cli {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string env(const char* name) {
    const char* v = std::getenv(name);
    return v != nullptr ? v : "";
}

bool env_flag(const char* name) {
    const auto v = env(name);
    return !v.empty() && v != "0" && v != "false";
}

std::string first_set(const std::string& flag, const char* env_name) { return flag.empty() ? env(env_name) : flag; }

crypto::Secret<crypto::kKeySize> read_key(const std::string& path, const char* what) {
    auto raw = read_file(path);
    if (raw.size() != crypto::kKeySize) {
        crypto::secure_zero(raw);
        throw Error(Errc::LengthMismatch, std::string(what) + " " + path + " is " + std::to_string(raw.size()) +
                                              " bytes, expected 32");
    }
    crypto::Secret<crypto::kKeySize> key(raw);
    crypto::secure_zero(raw);
    return key;
}

crypto::PublicKey read_pubkey(const std::string& path) {
    const auto raw = read_file(path);
    if (raw.size() != crypto::kPublicKeySize) {
        throw Error(Errc::LengthMismatch, "public key " + path + " is " + std::to_string(raw.size()) + " bytes, expected 32");
    }
    crypto::PublicKey pub{};
    std::copy(raw.begin(), raw.end(), pub.begin());
    return pub;
}

std::string file_uri(const std::string& path) { return "file://" + fs::absolute(path).lexically_normal().string(); }

/// Header, region sizes and layout check without reading the body.
struct HeaderView {
    format::Header header;
    std::uint64_t header_len = 0;
    std::uint64_t body_len = 0;
};

HeaderView read_header(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + path);
    std::error_code ec;
    const auto size = fs::file_size(path, ec);
    if (ec) throw Error(Errc::IoError, "cannot stat " + path);
    std::array<std::uint8_t, 8> prefix{};
    if (!in.read(reinterpret_cast<char*>(prefix.data()), 8)) throw Error(Errc::TruncatedFile, path + " is too short");
    std::uint64_t len = 0;
    for (int i = 7; i >= 0; --i) len = (len << 8) | prefix[static_cast<std::size_t>(i)];
    if (len > format::ParseOptions{}.max_header_len) throw Error(Errc::HeaderTooLarge, "header length " + std::to_string(len));
    if (len > size - 8) throw Error(Errc::TruncatedFile, "header length exceeds file size");
    std::string text(static_cast<std::size_t>(len), '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw Error(Errc::IoError, "cannot read header");
    HeaderView v;
    v.header = format::decode_header_json(text);
    v.header_len = len;
    v.body_len = size - 8 - len;
    return v;
}

std::string shape_text(const format::Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
    return s + "]";
}

/// Failures that mean "the file did not verify" rather than "you called it wrong".
bool verification_failure(Errc c) {
    switch (c) {
        case Errc::SignatureInvalid:
        case Errc::PolicyDenied:
        case Errc::AuthenticationFailed:
        case Errc::KbsDenied:
        case Errc::KbsSignatureRejected:
        case Errc::UntrustedSigningKey:
        case Errc::LayoutError: return true;
        default: return false;
    }
}

std::string failure_phrase(Errc c) {
    switch (c) {
        case Errc::SignatureInvalid: return "signature invalid";
        case Errc::PolicyDenied: return "policy denied";
        case Errc::AuthenticationFailed: return "authentication failed";
        case Errc::KbsDenied: return "key broker denied the request";
        case Errc::KbsSignatureRejected: return "key broker rejected the signature";
        case Errc::UntrustedSigningKey: return "untrusted signing key";
        case Errc::LayoutError: return "layout";
        default: return std::string(errc_name(c));
    }
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::uint64_t parse_size(const std::string& s) {
    std::size_t pos = 0;
    std::uint64_t v = 0;
    try {
        v = std::stoull(s, &pos);
    } catch (const std::exception&) {
        throw Error(Errc::InvalidArgument, "bad size '" + s + "'");
    }
    const auto suffix = s.substr(pos);
    if (suffix.empty()) return v;
    if (suffix == "k" || suffix == "K") return v << 10;
    if (suffix == "m" || suffix == "M") return v << 20;
    if (suffix == "g" || suffix == "G") return v << 30;
    throw Error(Errc::InvalidArgument, "bad size suffix in '" + s + "'");
}

// ---- keygen ----

struct KeygenArgs {
    std::string type = "master";
    std::string out;
};

int cmd_keygen(const KeygenArgs& a, std::ostream& out) {
    if (a.type == "master") {
        crypto::Secret<crypto::kKeySize> key;
        crypto::system_random().fill(key.mutable_view());
        write_file_atomic(a.out, key.view(), true);
        out << "kid: " << crypto::key_id(key.view()) << "\n";
        return kExitOk;
    }
    const auto kp = crypto::generate_sign_keypair();
    write_file_atomic(a.out, kp.seed.view(), true);
    write_file_atomic(a.out + ".pub", kp.public_key);
    out << "kid: " << crypto::key_id(kp.public_key) << "\n";
    out << "public key: " << a.out << ".pub\n";
    return kExitOk;
}

// ---- encrypt ----

struct EncryptArgs {
    std::string in;
    std::string out;
    std::string master_key_file;
    std::string sign_key_file;
    std::string selection = "all";
    std::string policy_file;
    std::string keys_meta_file;
    std::string enc_uri;
};

int cmd_encrypt(const EncryptArgs& a, std::ostream& out) {
    const auto master_path = first_set(a.master_key_file, "CT_MASTER_KEY_FILE");
    const auto sign_path = first_set(a.sign_key_file, "CT_SIGN_KEY_FILE");
    if (master_path.empty()) throw Error(Errc::InvalidArgument, "no master key (--master-key-file or CT_MASTER_KEY_FILE)");
    if (sign_path.empty()) throw Error(Errc::InvalidArgument, "no signing key (--sign-key-file or CT_SIGN_KEY_FILE)");

    const auto file = read_file(a.in);
    const auto parsed = format::parse_header(file);
    if (is_protected(parsed.header)) throw Error(Errc::InvalidArgument, a.in + " is already encrypted");

    SerializeConfig config;
    config.master_key.key = read_key(master_path, "master key");
    config.master_key.kid = crypto::key_id(config.master_key.key.view());
    {
        const auto seed = read_key(sign_path, "signing key");
        config.sign_keypair = crypto::SignKeyPair::from_seed(seed.view());
    }

    if (!a.keys_meta_file.empty()) {
        const auto raw = read_file(a.keys_meta_file);
        config.keys_meta = keys::CryptoKeysMeta::parse(as_chars(raw));
    } else {
        auto uri = a.enc_uri.empty() ? env("CT_KBS_URL") : a.enc_uri;
        if (uri.empty()) uri = file_uri(master_path);
        config.keys_meta.enc = {config.master_key.kid, uri, std::string(crypto::kAeadAlg), "oct", {}};
        config.keys_meta.sign = {crypto::key_id(config.sign_keypair.public_key), file_uri(sign_path + ".pub"),
                                 std::string(crypto::kSignAlg), "OKP", {}};
    }
    if (!a.policy_file.empty()) {
        const auto raw = read_file(a.policy_file);
        config.policy = policy::PolicyDoc::parse(as_chars(raw));
        // Catch typos now rather than at load time.
        for (const auto& half : {config.policy.local, config.policy.remote}) {
            if (half && half->lang == policy::kLangCtJson) (void)policy::parse_policy(*half);
        }
    }

    if (a.selection == "all") {
        config.encrypt_selection = EncryptSelection::all();
    } else if (a.selection == "none") {
        config.encrypt_selection = EncryptSelection::none();
    } else {
        config.encrypt_selection = EncryptSelection::only(split_list(a.selection));
    }

    std::vector<TensorInput> inputs;
    for (const auto& t : parsed.header.tensors) {
        inputs.push_back({t.name, t.dtype, t.shape, parsed.raw.body.subspan(t.begin, t.byte_len())});
    }
    serialize_file(inputs, a.out, &config, parsed.header.metadata);

    const auto encrypted = config.encrypt_selection.kind == EncryptSelection::Kind::All
                               ? inputs.size()
                               : config.encrypt_selection.names.size();
    const auto growth = static_cast<std::int64_t>(fs::file_size(a.out)) - static_cast<std::int64_t>(file.size());
    out << "tensors: " << inputs.size() << "\n";
    out << "encrypted: " << encrypted << "\n";
    out << "header growth: " << growth << " bytes";
    if (encrypted > 0) out << " (" << growth / static_cast<std::int64_t>(encrypted) << " per encrypted tensor)";
    out << "\n";
    return kExitOk;
}

// ---- decrypt ----

struct DecryptArgs {
    std::string in;
    std::string out;
    std::string master_key_file;
    std::string pubkey_file;
    std::vector<std::string> trust_kids;
    std::vector<std::string> measurements;
    bool insecure_http = false;
};

int cmd_decrypt(const DecryptArgs& a, std::ostream& out) {
    OpenOptions options;
    const auto hv = read_header(a.in);
    if (is_protected(hv.header)) {
        const auto ck = hv.header.metadata.find(std::string(format::kCryptoKeysKey));
        if (ck == hv.header.metadata.end()) {
            throw Error(Errc::SignatureInvalid, "reserved keys present without __crypto_keys__");
        }
        const auto sign = keys::CryptoKeysMeta::parse_sign_ref(ck->second);
        auto pub_path = a.pubkey_file;
        if (pub_path.empty() && !env("CT_SIGN_KEY_FILE").empty()) pub_path = env("CT_SIGN_KEY_FILE") + ".pub";
        if (!pub_path.empty()) options.resolver.pinned_signing_keys.emplace(sign.kid, read_pubkey(pub_path));
        options.resolver.trusted_signer_kids.insert(a.trust_kids.begin(), a.trust_kids.end());
        if (options.resolver.pinned_signing_keys.empty() && options.resolver.trusted_signer_kids.empty()) {
            throw Error(Errc::InvalidArgument, "no signing trust root (--pubkey-file, --trust-kid or CT_SIGN_KEY_FILE)");
        }
    }
    const auto master_path = first_set(a.master_key_file, "CT_MASTER_KEY_FILE");
    if (!master_path.empty()) options.resolver.fallback_master_key = read_key(master_path, "master key");
    options.resolver.allow_insecure_http = a.insecure_http || env_flag("CT_KBS_INSECURE_HTTP");

    policy::Measurements extra;
    for (const auto& kv : a.measurements) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) throw Error(Errc::InvalidArgument, "measurement must be key=value: " + kv);
        extra[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    if (!extra.empty()) {
        options.measurements = [base = policy::default_provider(policy::system_clock()), extra] {
            auto m = base();
            for (const auto& [k, v] : extra) m[k] = v;
            return m;
        };
    }

    const auto handle = LoadHandle::open(a.in, std::move(options));
    std::vector<Tensor> tensors;
    std::vector<TensorInput> inputs;
    for (const auto& name : handle.names()) tensors.push_back(handle.get_tensor(name));
    const auto names = handle.names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        inputs.push_back({names[i], tensors[i].dtype, tensors[i].shape, tensors[i].data});
    }
    serialize_file(inputs, a.out, nullptr, handle.metadata());
    std::size_t encrypted = 0;
    for (const auto& [n, c] : handle.decrypt_stats()) encrypted += c;
    out << "tensors: " << names.size() << "\n";
    out << "decrypted: " << encrypted << "\n";
    return kExitOk;
}

// ---- inspect ----

int cmd_inspect(const std::string& path, bool as_json, std::ostream& out) {
    const auto hv = read_header(path);
    format::validate_layout(hv.header, hv.body_len);
    const auto& md = hv.header.metadata;

    std::optional<keys::CryptoKeysMeta> keys_meta;
    EncryptionTable records;
    policy::PolicyDoc pol;
    if (const auto it = md.find(std::string(format::kCryptoKeysKey)); it != md.end()) {
        keys_meta = keys::CryptoKeysMeta::parse(it->second);
    }
    if (const auto it = md.find(std::string(format::kEncryptionKey)); it != md.end()) {
        records = parse_encryption_table(it->second);
    }
    if (const auto it = md.find(std::string(format::kPolicyKey)); it != md.end()) pol = policy::PolicyDoc::parse(it->second);
    const bool signed_header = md.count(std::string(format::kSignatureKey)) != 0;

    format::Metadata user;
    for (const auto& [k, v] : md) {
        if (!format::is_reserved_key(k)) user.emplace(k, v);
    }

    if (as_json) {
        json report;
        report["header_bytes"] = hv.header_len;
        report["body_bytes"] = hv.body_len;
        report["tensors"] = json::array();
        for (const auto& t : hv.header.tensors) {
            report["tensors"].push_back({{"name", t.name},
                                         {"dtype", format::dtype_name(t.dtype)},
                                         {"shape", t.shape},
                                         {"data_offsets", {t.begin, t.end}},
                                         {"encrypted", records.count(t.name) != 0}});
        }
        if (keys_meta) {
            auto ref = [](const keys::KeyRef& r) { return json{{"kid", r.kid}, {"uri", r.uri}, {"alg", r.alg}}; };
            report["encryption"] = {{"encrypted_tensors", records.size()}, {"enc", ref(keys_meta->enc)},
                                    {"sign", ref(keys_meta->sign)}};
        } else {
            report["encryption"] = nullptr;
        }
        auto lang = [](const std::optional<policy::PolicyText>& p) -> json {
            return p ? json(p->lang) : json(nullptr);
        };
        report["policy"] = {{"local", lang(pol.local)}, {"remote", lang(pol.remote)}};
        report["signature"] = signed_header;
        report["metadata"] = user;
        out << report.dump(2) << "\n";
        return kExitOk;
    }

    out << "tensors: " << hv.header.tensors.size() << " (header " << hv.header_len << " bytes, body " << hv.body_len
        << " bytes)\n";
    for (const auto& t : hv.header.tensors) {
        out << "  " << std::left << std::setw(32) << t.name << " " << std::setw(5) << format::dtype_name(t.dtype) << " "
            << std::setw(18) << shape_text(t.shape) << " [" << t.begin << ", " << t.end << ")"
            << (records.count(t.name) ? "  encrypted" : "") << "\n";
    }
    if (!keys_meta) {
        out << "encryption: none\n";
    } else {
        out << "encryption: " << records.size() << " of " << hv.header.tensors.size() << " tensors\n";
        out << "enc key: kid=" << keys_meta->enc.kid << " uri=" << keys_meta->enc.uri << "\n";
        out << "sign key: kid=" << keys_meta->sign.kid << " uri=" << keys_meta->sign.uri << "\n";
    }
    out << "policy: local=" << (pol.local ? pol.local->lang : "none")
        << " remote=" << (pol.remote ? pol.remote->lang : "none") << "\n";
    out << "signature: " << (signed_header ? "present" : "absent") << "\n";
    for (const auto& [k, v] : user) out << "metadata: " << k << "=" << v << "\n";
    return kExitOk;
}

// ---- verify ----

int cmd_verify(const std::string& path, const std::string& pubkey_file, std::ostream& out, std::ostream& err) {
    HeaderView hv;
    try {
        hv = read_header(path);
    } catch (const Error& e) {
        if (e.code() == Errc::IoError) throw;
        err << "format: " << e.what() << "\n";
        return kExitVerifyFailed;
    }
    const auto layout_ok = [&] {
        try {
            format::validate_layout(hv.header, hv.body_len);
            return true;
        } catch (const Error& e) {
            err << "layout: " << e.what() << "\n";
            return false;
        }
    };
    if (!is_protected(hv.header)) {
        if (!layout_ok()) return kExitVerifyFailed;
        out << "ok: plain file, layout valid\n";
        return kExitOk;
    }
    // Signature first: offsets in an unverified header are not worth reporting on.
    auto pub_path = pubkey_file;
    if (pub_path.empty() && !env("CT_SIGN_KEY_FILE").empty()) pub_path = env("CT_SIGN_KEY_FILE") + ".pub";
    if (pub_path.empty()) throw Error(Errc::InvalidArgument, "protected file needs --pubkey-file");
    const auto pub = read_pubkey(pub_path);
    try {
        if (!verify_header_signature(hv.header, pub)) {
            err << "signature: does not verify\n";
            return kExitVerifyFailed;
        }
    } catch (const Error& e) {
        err << "signature: " << e.what() << "\n";
        return kExitVerifyFailed;
    }
    if (!layout_ok()) return kExitVerifyFailed;
    out << "ok: layout valid, signature verifies\n";
    return kExitOk;
}

// ---- serve ----

struct ServeArgs {
    std::string keystore;
    std::string host = "127.0.0.1";
    int port = 8443;
    std::string tls_cert;
    std::string tls_key;
    bool insecure_http = false;
};

int cmd_serve(const ServeArgs& a, std::ostream& out, std::ostream& err) {
    kbs::ServiceConfig config;
    config.host = a.host;
    config.port = a.port;
    config.insecure_http = a.insecure_http || env_flag("CT_KBS_INSECURE_HTTP");
    config.tls_cert = a.tls_cert;
    config.tls_key = a.tls_key;

    // Block the stop signals before any thread starts so only sigwait sees them.
    sigset_t stop_signals;
    sigemptyset(&stop_signals);
    sigaddset(&stop_signals, SIGINT);
    sigaddset(&stop_signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);

    kbs::Server server(config);
    server.start();
    out << "listening on " << server.base_url() << std::endl;
    auto store = kbs::load_keystore(a.keystore);
    out << "keystore: " << store.keys.size() << " keys, " << store.signers.size() << " signers" << std::endl;
    server.set_broker(std::make_shared<kbs::KeyBroker>(std::move(store), policy::system_clock(),
                                                       [&err](const std::string& line) { err << line << std::endl; }));
    int sig = 0;
    sigwait(&stop_signals, &sig);
    server.stop();
    return kExitOk;
}

// ---- bench ----

struct BenchArgs {
    std::string sizes = "64K,1M";
    std::string fractions = "0,0.1,0.5,1";
    std::size_t repeats = 20;
    std::size_t tensors = 20;
    std::uint64_t seed = 1;
    std::string out;
    bool check = false;
};

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
    bench::MatrixSpec spec;
    spec.tensor_bytes.clear();
    for (const auto& s : split_list(a.sizes)) spec.tensor_bytes.push_back(parse_size(s));
    spec.fractions.clear();
    for (const auto& f : split_list(a.fractions)) {
        try {
            spec.fractions.push_back(std::stod(f));
        } catch (const std::exception&) {
            throw Error(Errc::InvalidArgument, "bad fraction '" + f + "'");
        }
    }
    spec.repeats = a.repeats;
    spec.tensors_per_file = a.tensors;
    spec.seed = a.seed;
    const auto report = bench::run_matrix(spec);
    if (a.out.empty()) {
        bench::write_csv(report, out);
    } else {
        bench::write_csv(report, fs::path(a.out));
    }
    if (!a.check) return kExitOk;
    int rc = kExitOk;
    for (const auto& f : bench::assert_trends(report)) {
        err << (f.passed ? "PASS " : "FAIL ") << f.check << ": " << f.detail << "\n";
        if (!f.passed) rc = kExitVerifyFailed;
    }
    return rc;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Encrypted tensor container tool"};
    app.require_subcommand(1);

    KeygenArgs keygen;
    auto* kg = app.add_subcommand("keygen", "Generate a master key or an Ed25519 signing key");
    kg->add_option("--type", keygen.type, "master or sign")->check(CLI::IsMember({"master", "sign"}));
    kg->add_option("--out", keygen.out, "Key file to write (0600); signing keys also get <out>.pub")->required();

    EncryptArgs enc;
    auto* ec = app.add_subcommand("encrypt", "Encrypt and sign a plain container");
    ec->add_option("input", enc.in)->required();
    ec->add_option("output", enc.out)->required();
    ec->add_option("--master-key-file", enc.master_key_file, "Defaults to $CT_MASTER_KEY_FILE");
    ec->add_option("--sign-key-file", enc.sign_key_file, "Defaults to $CT_SIGN_KEY_FILE");
    ec->add_option("--encrypt", enc.selection, "all, none, or a comma-separated list of tensor names");
    ec->add_option("--policy-file", enc.policy_file, "JSON with optional \"local\" and \"remote\" policies");
    ec->add_option("--keys-meta-file", enc.keys_meta_file, "Explicit __crypto_keys__ document");
    ec->add_option("--enc-uri", enc.enc_uri, "Master key URI to record; defaults to $CT_KBS_URL, then the key file");

    DecryptArgs dec;
    auto* dc = app.add_subcommand("decrypt", "Verify, decrypt and write a plain container");
    dc->add_option("input", dec.in)->required();
    dc->add_option("output", dec.out)->required();
    dc->add_option("--master-key-file", dec.master_key_file, "Defaults to $CT_MASTER_KEY_FILE");
    dc->add_option("--pubkey-file", dec.pubkey_file, "Signer public key; defaults to $CT_SIGN_KEY_FILE.pub");
    dc->add_option("--trust-kid", dec.trust_kids, "Signer kid whose key may be fetched from the file's URI");
    dc->add_option("--measurement", dec.measurements, "key=value added to the local measurements");
    dc->add_flag("--insecure-http", dec.insecure_http, "Talk to kbs:// over plain HTTP (tests only)");

    std::string inspect_path;
    bool inspect_json = false;
    auto* ic = app.add_subcommand("inspect", "Show tensors, encryption, keys and policy");
    ic->add_option("path", inspect_path)->required();
    ic->add_flag("--json", inspect_json);

    std::string verify_path;
    std::string verify_pub;
    auto* vc = app.add_subcommand("verify", "Check layout and header signature");
    vc->add_option("path", verify_path)->required();
    vc->add_option("--pubkey-file", verify_pub, "Signer public key; defaults to $CT_SIGN_KEY_FILE.pub");

    ServeArgs serve;
    auto* sc = app.add_subcommand("serve", "Run the key broker");
    sc->add_option("--keystore", serve.keystore)->required();
    sc->add_option("--host", serve.host);
    sc->add_option("--port", serve.port);
    sc->add_option("--tls-cert", serve.tls_cert);
    sc->add_option("--tls-key", serve.tls_key);
    sc->add_flag("--insecure-http", serve.insecure_http, "Serve plain HTTP (tests only)");

    BenchArgs bench;
    auto* bc = app.add_subcommand("bench", "Time serialize/open/access across encrypted fractions");
    bc->add_option("--sizes", bench.sizes, "Per-tensor sizes, e.g. 64K,1M");
    bc->add_option("--encrypt-fraction", bench.fractions, "Comma-separated fractions in [0, 1]");
    bc->add_option("--repeat", bench.repeats)->check(CLI::PositiveNumber);
    bc->add_option("--tensors", bench.tensors, "Tensors per file")->check(CLI::PositiveNumber);
    bc->add_option("--seed", bench.seed);
    bc->add_option("--out", bench.out, "CSV path; stdout when omitted");
    bc->add_flag("--check", bench.check, "Also run the trend checks; exit 1 if any fails");

    std::vector<std::string> argv_store{"cryptotensors"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_store) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*kg) return cmd_keygen(keygen, out);
        if (*ec) return cmd_encrypt(enc, out);
        if (*dc) return cmd_decrypt(dec, out);
        if (*ic) return cmd_inspect(inspect_path, inspect_json, out);
        if (*vc) return cmd_verify(verify_path, verify_pub, out, err);
        if (*sc) return cmd_serve(serve, out, err);
        if (*bc) return cmd_bench(bench, out, err);
    } catch (const Error& e) {
        if (verification_failure(e.code())) {
            err << "error: " << failure_phrase(e.code()) << ": " << e.detail() << "\n";
            return kExitVerifyFailed;
        }
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace ct::cli
