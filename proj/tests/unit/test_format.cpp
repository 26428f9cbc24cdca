#include <doctest.h>
#include <sys/mman.h>
#include <unistd.h>

#include <nlohmann/json.hpp>
#include <algorithm>
#include <cstring>
#include <random>

#include "cryptotensors/error.hpp"
#include "cryptotensors/format.hpp"
#include "fixtures.hpp"

using namespace ct;
using namespace ct::format;
using nlohmann::json;

namespace {

Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return Errc::InvalidArgument;
}

std::optional<LayoutIssue> issue_of(const Header& h, std::uint64_t body) {
    try {
        validate_layout(h, body);
    } catch (const Error& e) {
        REQUIRE(e.code() == Errc::LayoutError);
        return e.layout_issue();
    }
    return std::nullopt;
}

Bytes container(const std::string& header_json, std::size_t body_len) {
    Bytes out;
    const auto prefix = length_prefix(header_json.size());
    out.insert(out.end(), prefix.begin(), prefix.end());
    out.insert(out.end(), header_json.begin(), header_json.end());
    out.resize(out.size() + body_len);
    return out;
}

// Canonical form built by a different route: nlohmann objects are std::map-backed, so
// dump() emits byte-sorted keys with no whitespace.
std::string oracle_canonical(const Header& h) {
    json doc = json::object();
    if (!h.metadata.empty()) doc["__metadata__"] = h.metadata;
    for (const auto& t : h.tensors) {
        doc[t.name] = {{"dtype", dtype_name(t.dtype)}, {"shape", t.shape}, {"data_offsets", {t.begin, t.end}}};
    }
    return doc.dump();
}

}  // namespace

TEST_CASE("dtype table") {
    CHECK(kAllDtypes.size() == 13);
    for (auto d : kAllDtypes) CHECK(parse_dtype(dtype_name(d)) == d);
    CHECK(element_size(Dtype::BOOL) == 1);
    CHECK(element_size(Dtype::BF16) == 2);
    CHECK(element_size(Dtype::F32) == 4);
    CHECK(element_size(Dtype::I64) == 8);
    CHECK(code_of([] { parse_dtype("F8_E4M3"); }) == Errc::InvalidDtype);
    CHECK(code_of([] { parse_dtype("f32"); }) == Errc::InvalidDtype);
}

TEST_CASE("tensor byte length") {
    const std::uint64_t s1[] = {2, 3};
    CHECK(tensor_byte_len(Dtype::F32, s1) == 24);
    CHECK(tensor_byte_len(Dtype::F64, {}) == 8);
    const std::uint64_t zero[] = {4, 0, 7};
    CHECK(tensor_byte_len(Dtype::I16, zero) == 0);
    const std::uint64_t huge[] = {1ULL << 40, 1ULL << 30};
    CHECK(code_of([&] { tensor_byte_len(Dtype::U8, huge); }) == Errc::Overflow);
    const std::uint64_t edge[] = {1ULL << 62};
    CHECK(code_of([&] { tensor_byte_len(Dtype::F32, edge); }) == Errc::Overflow);
}

TEST_CASE("build_header assigns offsets in name order and pads to 8") {
    const TensorSpec specs[] = {{"b", Dtype::F32, {2}}, {"a", Dtype::U8, {3}}, {"c", Dtype::I64, {}}};
    const auto built = build_header(specs, {{"k", "v"}});
    REQUIRE(built.header.tensors.size() == 3);
    CHECK(built.header.tensors[0].name == "a");
    CHECK(built.header.tensors[0].begin == 0);
    CHECK(built.header.tensors[0].end == 3);
    CHECK(built.header.tensors[1].name == "b");
    CHECK(built.header.tensors[1].begin == 3);
    CHECK(built.header.tensors[2].end == 19);
    CHECK(built.body_length == 19);
    CHECK((8 + built.header_bytes.size()) % 8 == 0);
    const std::string text(built.header_bytes.begin(), built.header_bytes.end());
    CHECK(text.rfind("{\"__metadata__\":{\"k\":\"v\"}", 0) == 0);
    CHECK(text.find("\"a\":{\"dtype\":\"U8\",\"shape\":[3],\"data_offsets\":[0,3]}") != std::string::npos);
}

TEST_CASE("build_header rejects bad names") {
    const TensorSpec dup[] = {{"x", Dtype::U8, {1}}, {"x", Dtype::U8, {1}}};
    CHECK(code_of([&] { build_header(dup, {}); }) == Errc::DuplicateName);
    const TensorSpec bad_utf8[] = {{std::string("\xff\xfe", 2), Dtype::U8, {1}}};
    CHECK(code_of([&] { build_header(bad_utf8, {}); }) == Errc::NameNotUtf8);
    const TensorSpec reserved[] = {{"__metadata__", Dtype::U8, {1}}};
    CHECK(code_of([&] { build_header(reserved, {}); }) == Errc::InvalidArgument);
}

TEST_CASE("empty metadata is omitted") {
    const TensorSpec specs[] = {{"w", Dtype::U8, {1}}};
    const auto built = build_header(specs, {});
    const std::string text(built.header_bytes.begin(), built.header_bytes.end());
    CHECK(text.find("__metadata__") == std::string::npos);
}

TEST_CASE("split_file errors") {
    const Bytes short_file(7, 0);
    CHECK(code_of([&] { split_file(short_file); }) == Errc::TruncatedFile);

    auto past_end = container("{}", 0);
    past_end[0] = 200;
    CHECK(code_of([&] { split_file(past_end); }) == Errc::TruncatedFile);

    auto big = container("{}      ", 0);
    ParseOptions small;
    small.max_header_len = 4;
    CHECK(code_of([&] { split_file(big, small); }) == Errc::HeaderTooLarge);

    Bytes huge_prefix(8, 0xff);
    CHECK(code_of([&] { split_file(huge_prefix); }) == Errc::HeaderTooLarge);
}

TEST_CASE("decode_header_json structural errors") {
    CHECK(code_of([] { decode_header_json("{"); }) == Errc::MalformedJson);
    CHECK(code_of([] { decode_header_json("[]"); }) == Errc::MalformedJson);
    CHECK(code_of([] {
              decode_header_json(R"({"a":{"dtype":"U8","shape":[1],"data_offsets":[0,1]},)"
                                 R"("a":{"dtype":"U8","shape":[1],"data_offsets":[1,2]}})");
          }) == Errc::MalformedJson);
    CHECK(code_of([] { decode_header_json(R"({"__metadata__":{"k":1}})"); }) == Errc::MalformedMetadata);
    CHECK(code_of([] { decode_header_json(R"({"__metadata__":{"k":"v","k":"w"}})"); }) == Errc::MalformedJson);
    CHECK(code_of([] { decode_header_json(R"({"a":{"dtype":"X9","shape":[1],"data_offsets":[0,1]}})"); }) ==
          Errc::InvalidDtype);
    CHECK(code_of([] { decode_header_json(R"({"a":{"dtype":"U8","shape":[-1],"data_offsets":[0,1]}})"); }) ==
          Errc::MalformedJson);
    CHECK(code_of([] { decode_header_json(R"({"a":{"dtype":"U8","shape":[1],"data_offsets":[0,1],"x":1}})"); }) ==
          Errc::MalformedJson);
    CHECK(code_of([] { decode_header_json(R"({"a":{"dtype":"U8","shape":[1]}})"); }) == Errc::MalformedJson);
}

TEST_CASE("validate_layout names each issue") {
    auto make = [](std::vector<TensorInfo> ts) {
        Header h;
        h.tensors = std::move(ts);
        return h;
    };
    CHECK_FALSE(issue_of(make({{"a", Dtype::U8, {2}, 0, 2}, {"b", Dtype::U8, {3}, 2, 5}}), 5).has_value());
    CHECK(issue_of(make({{"a", Dtype::U8, {2}, 0, 2}, {"b", Dtype::U8, {3}, 3, 6}}), 6) == LayoutIssue::Gap);
    CHECK(issue_of(make({{"a", Dtype::U8, {2}, 0, 2}, {"b", Dtype::U8, {3}, 1, 4}}), 4) == LayoutIssue::Overlap);
    CHECK(issue_of(make({{"a", Dtype::U8, {2}, 0, 2}}), 1) == LayoutIssue::OutOfBounds);
    CHECK(issue_of(make({{"a", Dtype::F32, {2}, 0, 4}}), 4) == LayoutIssue::SizeMismatch);
    CHECK(issue_of(make({{"a", Dtype::U8, {2}, 0, 2}}), 3) == LayoutIssue::Gap);
    CHECK_FALSE(issue_of(make({{"z", Dtype::U8, {0}, 0, 0}, {"a", Dtype::U8, {1}, 0, 1}}), 1).has_value());
    CHECK_FALSE(issue_of(Header{}, 0).has_value());

    Header dup = make({{"a", Dtype::U8, {1}, 0, 1}, {"a", Dtype::U8, {1}, 1, 2}});
    CHECK(code_of([&] { validate_layout(dup, 2); }) == Errc::DuplicateName);
}

TEST_CASE("parse_header never touches the body") {
    // Header at the end of one page, body on the next page, which is made unreadable.
    const TensorSpec specs[] = {{"w", Dtype::F32, {4}}};
    const auto built = build_header(specs, {});
    const auto prefix = length_prefix(built.header_bytes.size());
    const auto page = static_cast<std::size_t>(::sysconf(_SC_PAGESIZE));
    const std::size_t head = prefix.size() + built.header_bytes.size();
    REQUIRE(head <= page);
    auto* base = static_cast<std::uint8_t*>(::mmap(nullptr, 2 * page, PROT_READ | PROT_WRITE, MAP_PRIVATE | MAP_ANONYMOUS, -1, 0));
    REQUIRE(base != MAP_FAILED);
    auto* start = base + page - head;
    std::copy(prefix.begin(), prefix.end(), start);
    std::copy(built.header_bytes.begin(), built.header_bytes.end(), start + prefix.size());
    REQUIRE(::mprotect(base + page, page, PROT_NONE) == 0);
    const auto parsed = parse_header(ByteView(start, head + 16));
    CHECK(parsed.header == built.header);
    CHECK(parsed.raw.body.size() == 16);
    ::munmap(base, 2 * page);
}

TEST_CASE("canonicalize matches an independent JSON writer") {
    std::mt19937_64 rng(11);
    for (int round = 0; round < 50; ++round) {
        auto table = testing::random_table(rng, 1 + rng() % 12, 64);
        std::vector<TensorSpec> specs;
        for (std::size_t i = 0; i < table.names.size(); ++i) specs.push_back({table.names[i], table.dtypes[i], table.shapes[i]});
        Metadata md;
        if (round % 3) md = {{"format", "pt"}, {"note", "tab\there \"quoted\" \x01"}, {"ünï", "çødé"}};
        const auto built = build_header(specs, md);
        CHECK(canonicalize(built.header) == oracle_canonical(built.header));
        const auto decoded = decode_header_json(
            std::string_view(reinterpret_cast<const char*>(built.header_bytes.data()), built.header_bytes.size()));
        CHECK(decoded == built.header);
        CHECK(canonicalize(decoded) == canonicalize(built.header));
    }
}

TEST_CASE("canonical form ignores key order and whitespace") {
    const auto a = decode_header_json(
        R"({"b":{"shape":[1],"dtype":"U8","data_offsets":[1,2]},"a":{"dtype":"U8","shape":[1],"data_offsets":[0,1]}})");
    const auto b = decode_header_json(R"( { "__metadata__" : { } ,
        "a" : {"data_offsets":[0,1],"shape":[1],"dtype":"U8"},
        "b" : {"dtype":"U8","data_offsets":[1,2],"shape":[1]} }   )");
    CHECK(canonicalize(a) == canonicalize(b));
    CHECK(canonicalize(a) ==
          R"({"a":{"data_offsets":[0,1],"dtype":"U8","shape":[1]},"b":{"data_offsets":[1,2],"dtype":"U8","shape":[1]}})");
    CHECK(canonicalize(Header{}) == "{}");
}

TEST_CASE("canonicalize refuses a signed header") {
    Header h;
    h.metadata[std::string(kSignatureKey)] = "x";
    CHECK(code_of([&] { canonicalize(h); }) == Errc::SignaturePresent);
}

TEST_CASE("utf8 validation") {
    CHECK(is_valid_utf8("plain"));
    CHECK(is_valid_utf8("\xc3\xa9\xe2\x82\xac\xf0\x9f\x98\x80"));
    CHECK_FALSE(is_valid_utf8("\xc3"));
    CHECK_FALSE(is_valid_utf8("\xc0\xaf"));          // overlong
    CHECK_FALSE(is_valid_utf8("\xed\xa0\x80"));      // surrogate
    CHECK_FALSE(is_valid_utf8("\xf4\x90\x80\x80"));  // above U+10FFFF
}

TEST_CASE("encode_header rejects non-UTF-8 metadata") {
    Header h;
    h.metadata["k"] = std::string("\xff", 1);
    CHECK(code_of([&] { encode_header(h); }) == Errc::MalformedMetadata);
}

TEST_CASE("length prefix is little-endian") {
    const auto p = length_prefix(0x0102030405060708ULL);
    CHECK(p[0] == 0x08);
    CHECK(p[7] == 0x01);
}

TEST_CASE("base64 follows RFC 4648 and accepts only the canonical form") {
    const std::pair<const char*, const char*> vectors[] = {
        {"", ""}, {"f", "Zg=="}, {"fo", "Zm8="}, {"foo", "Zm9v"},
        {"foob", "Zm9vYg=="}, {"fooba", "Zm9vYmE="}, {"foobar", "Zm9vYmFy"},
    };
    for (const auto& [plain, encoded] : vectors) {
        CHECK(base64_encode(as_bytes(plain)) == encoded);
        CHECK(base64_decode(encoded) == Bytes(plain, plain + std::strlen(plain)));
    }
    const Bytes all = [] {
        Bytes b(256);
        for (int i = 0; i < 256; ++i) b[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i);
        return b;
    }();
    CHECK(base64_decode(base64_encode(all)) == all);

    for (const char* bad : {"Zg=", "Zg", "Z===", "Zh==", "Zm9=", "Zm 9v", " Zm9v", "Zm9v\n", "Zg==Zm9v", "Zm-v", "Zm_v"}) {
        CAPTURE(bad);
        CHECK_THROWS_AS(base64_decode(bad), Error);
    }
}

TEST_CASE("hex") {
    CHECK(hex_encode(Bytes{0x00, 0xab, 0xff}) == "00abff");
    CHECK(hex_decode("00ABff") == Bytes{0x00, 0xab, 0xff});
    CHECK_THROWS_AS(hex_decode("abc"), Error);
    CHECK_THROWS_AS(hex_decode("zz"), Error);
}
