#include "fixtures.hpp"

#include <fstream>

namespace ct::testing {

TempDir::TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("ct-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

TestKeys make_keys(std::uint64_t seed) {
    crypto::SeededRandom rng(seed);
    TestKeys k;
    rng.fill(k.master.key.mutable_view());
    k.master.kid = crypto::key_id(k.master.key.view());
    k.signer = crypto::generate_sign_keypair(rng);
    k.meta.enc = {k.master.kid, "file:///nonexistent/master.key", std::string(crypto::kAeadAlg), "oct", {}};
    k.meta.sign = {crypto::key_id(k.signer.public_key), "file:///nonexistent/sign.pub", std::string(crypto::kSignAlg),
                   "OKP", {}};
    return k;
}

SerializeConfig make_config(const TestKeys& keys, EncryptSelection selection, crypto::RandomSource* random) {
    SerializeConfig c;
    c.master_key.key = keys.master.key;
    c.master_key.kid = keys.master.kid;
    c.sign_keypair = keys.signer;
    c.keys_meta = keys.meta;
    c.encrypt_selection = std::move(selection);
    c.random = random;
    return c;
}

OpenOptions open_options(const TestKeys& keys, policy::Measurements m) {
    OpenOptions o;
    o.resolver.pinned_signing_keys.emplace(keys.meta.sign.kid, keys.signer.public_key);
    o.resolver.master_keys.emplace(keys.master.kid, keys.master.key);
    o.measurements = policy::fixed_provider(std::move(m));
    return o;
}

std::vector<TensorInput> Table::inputs() const {
    std::vector<TensorInput> out;
    for (std::size_t i = 0; i < names.size(); ++i) out.push_back({names[i], dtypes[i], shapes[i], data[i]});
    return out;
}

Table random_table(std::mt19937_64& rng, std::size_t count, std::uint64_t max_elements) {
    Table t;
    std::uniform_int_distribution<int> rank_d(0, 4);
    std::uniform_int_distribution<std::size_t> dtype_d(0, format::kAllDtypes.size() - 1);
    for (std::size_t i = 0; i < count; ++i) {
        t.names.push_back("layer." + std::to_string(rng() % 1000) + ".w" + std::to_string(i));
        const auto dtype = format::kAllDtypes[dtype_d(rng)];
        format::Shape shape;
        const int rank = rank_d(rng);
        std::uint64_t budget = 1 + rng() % max_elements;
        if (rng() % 16 == 0) budget = 0;
        for (int r = 0; r < rank; ++r) {
            const std::uint64_t d = budget == 0 ? 0 : 1 + rng() % std::max<std::uint64_t>(1, budget);
            shape.push_back(d);
            budget = d == 0 ? 0 : budget / d;
        }
        Bytes data(format::tensor_byte_len(dtype, shape));
        for (auto& b : data) b = static_cast<std::uint8_t>(rng());
        t.dtypes.push_back(dtype);
        t.shapes.push_back(std::move(shape));
        t.data.push_back(std::move(data));
    }
    return t;
}

Table uniform_table(std::mt19937_64& rng, std::size_t count, std::uint64_t bytes) {
    Table t;
    for (std::size_t i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "t%03zu", i);
        t.names.emplace_back(name);
        t.dtypes.push_back(format::Dtype::U8);
        t.shapes.push_back({bytes});
        Bytes data(bytes);
        for (auto& b : data) b = static_cast<std::uint8_t>(rng());
        t.data.push_back(std::move(data));
    }
    return t;
}

void write_bytes(const std::filesystem::path& path, ByteView data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

}  // namespace ct::testing
