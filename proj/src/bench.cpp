#include "cryptotensors/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "cryptotensors/error.hpp"
#include "cryptotensors/loader.hpp"
#include "cryptotensors/serializer.hpp"

namespace ct::bench {
namespace {

struct Stats {
    double mean = 0;
    double stddev = 0;
    double median = 0;
};

Stats summarize(const std::vector<double>& samples) {
    Stats s;
    if (samples.empty()) return s;
    s.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
    if (samples.size() > 1) {
        double sq = 0;
        for (double x : samples) sq += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(sq / static_cast<double>(samples.size() - 1));
    }
    auto sorted = samples;
    std::sort(sorted.begin(), sorted.end());
    const auto mid = sorted.size() / 2;
    s.median = sorted.size() % 2 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / 2;
    return s;
}

template <typename F>
std::vector<double> measure(std::size_t warmup, std::size_t repeats, const BenchClock& clock, F&& body) {
    for (std::size_t i = 0; i < warmup; ++i) body();
    std::vector<double> out;
    out.reserve(repeats);
    for (std::size_t i = 0; i < repeats; ++i) {
        const double t0 = clock();
        body();
        out.push_back(clock() - t0);
    }
    return out;
}

class TempDir {
public:
    explicit TempDir(std::filesystem::path requested) {
        if (!requested.empty()) {
            path_ = std::move(requested);
            std::filesystem::create_directories(path_);
            return;
        }
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("ct-bench-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
        owned_ = true;
    }
    ~TempDir() {
        std::error_code ec;
        if (owned_) std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    bool owned_ = false;
};

std::string fraction_tag(double f) {
    std::ostringstream s;
    s << std::setprecision(6) << f;
    return s.str();
}

bool near(double a, double b) { return std::fabs(a - b) < 1e-9; }

}  // namespace

BenchClock steady_clock() {
    return [] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
    };
}

std::vector<std::string> workload_names(std::uint64_t tensor_bytes, std::size_t count) {
    std::vector<std::string> names;
    names.reserve(count);
    for (std::size_t i = 0; i < count; ++i) names.push_back("s" + std::to_string(tensor_bytes) + "/t" + std::to_string(i));
    return names;
}

std::vector<std::string> nested_selection(const std::vector<std::string>& names, double fraction, std::uint64_t seed) {
    if (fraction < 0 || fraction > 1) throw Error(Errc::InvalidArgument, "fraction must be within [0, 1]");
    std::vector<std::size_t> order(names.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    // Fisher-Yates by hand: std::shuffle's draw pattern is implementation-defined.
    for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(names.size())));
    std::vector<std::string> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(names[order[i]]);
    return out;
}

Report run_matrix(const MatrixSpec& spec, const BenchClock& clock) {
    if (spec.tensor_bytes.empty() || spec.fractions.empty() || spec.repeats == 0 || spec.tensors_per_file == 0) {
        throw Error(Errc::InvalidArgument, "bench matrix is empty");
    }
    TempDir dir(spec.work_dir);
    Report report;
    report.environment["repeats"] = std::to_string(spec.repeats);
    report.environment["warmup"] = std::to_string(spec.warmup);
    report.environment["tensors_per_file"] = std::to_string(spec.tensors_per_file);
    report.environment["seed"] = std::to_string(spec.seed);
    report.environment["hardware_threads"] = std::to_string(std::thread::hardware_concurrency());

    crypto::SeededRandom keygen(spec.seed ^ 0x6b657973ULL);
    crypto::MasterKey master;
    keygen.fill(master.key.mutable_view());
    master.kid = crypto::key_id(master.key.view());
    const auto signer = crypto::generate_sign_keypair(keygen);
    const auto sign_kid = crypto::key_id(signer.public_key);

    keys::CryptoKeysMeta meta;
    meta.enc = {master.kid, "file:///dev/null", std::string(crypto::kAeadAlg), "oct", {}};
    meta.sign = {sign_kid, "file:///dev/null", std::string(crypto::kSignAlg), "OKP", {}};

    for (const auto size : spec.tensor_bytes) {
        const auto names = workload_names(size, spec.tensors_per_file);
        std::vector<Bytes> data(names.size(), Bytes(static_cast<std::size_t>(size)));
        crypto::SeededRandom content(spec.seed + size);
        for (auto& d : data) content.fill(d);
        std::vector<TensorInput> inputs;
        for (std::size_t i = 0; i < names.size(); ++i) inputs.push_back({names[i], format::Dtype::U8, {size}, data[i]});

        const auto plain_file = serialize_bytes(inputs);
        const auto plain_header = plain_file.size() - size * names.size() - 8;
        std::vector<SerializeConfig> configs(spec.fractions.size());
        for (std::size_t i = 0; i < configs.size(); ++i) {
            auto& config = configs[i];
            config.master_key.key = master.key;
            config.master_key.kid = master.kid;
            config.sign_keypair = signer;
            config.keys_meta = meta;
            config.encrypt_selection = EncryptSelection::only(nested_selection(names, spec.fractions[i], spec.seed));
        }

        // Serialize timings are interleaved: each round times the plain baseline and every
        // fraction once, starting at a rotating index, so drift lands on all of them alike.
        const std::size_t variants = configs.size() + 1;
        std::vector<std::vector<double>> samples(variants);
        for (std::size_t round = 0; round < spec.warmup + spec.repeats; ++round) {
            for (std::size_t j = 0; j < variants; ++j) {
                const auto v = (round + j) % variants;
                const SerializeConfig* config = v == 0 ? nullptr : &configs[v - 1];
                const double t0 = clock();
                (void)serialize_bytes(inputs, config);
                const double elapsed = clock() - t0;
                if (round >= spec.warmup) samples[v].push_back(elapsed);
            }
        }

        const auto plain = summarize(samples[0]);
        report.rows.push_back({"serialize_plain", size, 0.0, 0, plain.mean, plain.stddev, plain.median, spec.repeats,
                               plain_header, size * names.size()});

        for (std::size_t fi = 0; fi < spec.fractions.size(); ++fi) {
            const double fraction = spec.fractions[fi];
            const auto& config = configs[fi];
            const auto count = config.encrypt_selection.names.size();
            const auto ser = summarize(samples[fi + 1]);
            const auto path = dir.path() / ("s" + std::to_string(size) + "_f" + fraction_tag(fraction) + ".ct");
            serialize_file(inputs, path, &config);
            const auto file_size = std::filesystem::file_size(path);
            const auto body = size * names.size();
            const auto header = file_size - body - 8;
            const Row base{"", size, fraction, count, 0, 0, 0, spec.repeats, header, body};

            OpenOptions options;
            options.resolver.pinned_signing_keys.emplace(sign_kid, signer.public_key);
            options.resolver.fallback_master_key = master.key;
            options.measurements = policy::fixed_provider({});
            const auto open = [&] { return LoadHandle::open(path, options); };

            const auto opened = summarize(measure(spec.warmup, spec.repeats, clock, [&] { (void)open(); }));

            std::vector<double> first;
            std::vector<double> second;
            for (std::size_t i = 0; i < spec.warmup + spec.repeats; ++i) {
                const auto handle = open();
                double t0 = clock();
                for (const auto& n : names) (void)handle.get_tensor(n);
                const double a = clock() - t0;
                t0 = clock();
                for (const auto& n : names) (void)handle.get_tensor(n);
                const double b = clock() - t0;
                if (i >= spec.warmup) {
                    first.push_back(a);
                    second.push_back(b);
                }
            }
            const auto fa = summarize(first);
            const auto sa = summarize(second);

            for (const auto& [phase, stats] : {std::pair{"serialize", ser}, std::pair{"open", opened},
                                               std::pair{"first_access", fa}, std::pair{"second_access", sa}}) {
                Row row = base;
                row.phase = phase;
                row.mean = stats.mean;
                row.stddev = stats.stddev;
                row.median = stats.median;
                report.rows.push_back(row);
            }
            std::error_code ec;
            std::filesystem::remove(path, ec);
        }
    }
    return report;
}

void write_csv(const Report& report, std::ostream& out) {
    out << "phase,tensor_bytes,encrypted_fraction,mean_seconds,header_bytes,body_bytes\n";
    for (const auto& r : report.rows) {
        out << r.phase << ',' << r.tensor_bytes << ',' << fraction_tag(r.encrypted_fraction) << ','
            << std::setprecision(9) << r.mean << ',' << r.header_bytes << ',' << r.body_bytes << '\n';
    }
}

void write_csv(const Report& report, const std::filesystem::path& path) {
    std::ostringstream s;
    write_csv(report, s);
    const auto text = s.str();
    write_file_atomic(path, as_bytes(text));
}

std::vector<Finding> assert_trends(const Report& report) {
    std::map<std::uint64_t, std::vector<const Row*>> by_size;
    for (const auto& r : report.rows) by_size[r.tensor_bytes].push_back(&r);

    std::vector<Finding> findings;
    for (const auto& [size, rows] : by_size) {
        const auto tag = " (tensor_bytes=" + std::to_string(size) + ")";
        auto phase = [&](std::string_view p) {
            std::vector<const Row*> out;
            for (const auto* r : rows) {
                if (r->phase == p) out.push_back(r);
            }
            std::sort(out.begin(), out.end(),
                      [](const Row* a, const Row* b) { return a->encrypted_fraction < b->encrypted_fraction; });
            return out;
        };
        const auto ser = phase("serialize");

        Finding mono{"serialize_monotone" + tag, true, "ok"};
        for (std::size_t i = 1; i < ser.size(); ++i) {
            if (ser[i]->median < ser[i - 1]->median * 0.9) {
                mono.passed = false;
                std::ostringstream s;
                s << "fraction " << ser[i]->encrypted_fraction << " median " << ser[i]->median << "s below fraction "
                  << ser[i - 1]->encrypted_fraction << " median " << ser[i - 1]->median << "s by more than 10%";
                mono.detail = s.str();
                break;
            }
        }
        if (!ser.empty()) findings.push_back(mono);

        const auto first = phase("first_access");
        const auto second = phase("second_access");
        Finding once{"decrypt_once" + tag, true, "ok"};
        bool any = false;
        for (const auto* f : first) {
            if (f->encrypted_count == 0) continue;
            for (const auto* s : second) {
                if (!near(s->encrypted_fraction, f->encrypted_fraction)) continue;
                any = true;
                if (!(f->median > s->median)) {
                    once.passed = false;
                    std::ostringstream d;
                    d << "fraction " << f->encrypted_fraction << ": first " << f->median << "s, second " << s->median << 's';
                    once.detail = d.str();
                }
            }
        }
        if (any) findings.push_back(once);

        if (ser.size() >= 2) {
            double mx = 0;
            double my = 0;
            for (const auto* r : ser) {
                mx += static_cast<double>(r->encrypted_count);
                my += static_cast<double>(r->header_bytes);
            }
            mx /= static_cast<double>(ser.size());
            my /= static_cast<double>(ser.size());
            double sxx = 0;
            double sxy = 0;
            double syy = 0;
            for (const auto* r : ser) {
                const double dx = static_cast<double>(r->encrypted_count) - mx;
                const double dy = static_cast<double>(r->header_bytes) - my;
                sxx += dx * dx;
                sxy += dx * dy;
                syy += dy * dy;
            }
            // No spread in y means every point sits on the fit.
            const double r2 = syy == 0 ? 1.0 : (sxx == 0 ? 0.0 : (sxy * sxy) / (sxx * syy));
            std::ostringstream d;
            d << "R^2 = " << r2;
            findings.push_back({"header_linear" + tag, r2 >= 0.9, d.str()});
        }

        const auto plain = phase("serialize_plain");
        const Row* tenth = nullptr;
        const Row* full = nullptr;
        for (const auto* r : ser) {
            if (near(r->encrypted_fraction, 0.1)) tenth = r;
            if (near(r->encrypted_fraction, 1.0)) full = r;
        }
        if (!plain.empty() && tenth != nullptr && full != nullptr) {
            const double o10 = tenth->median - plain.front()->median;
            const double o100 = full->median - plain.front()->median;
            std::ostringstream d;
            d << "overhead(0.1) = " << o10 << "s, overhead(1.0) = " << o100 << 's';
            findings.push_back({"partial_overhead" + tag, o10 < o100 / 2, d.str()});
        }
    }
    return findings;
}

}  // namespace ct::bench
