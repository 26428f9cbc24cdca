#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace ct::bench {

struct MatrixSpec {
    std::vector<std::uint64_t> tensor_bytes{1 << 20};
    std::vector<double> fractions{0.0, 0.1, 0.5, 1.0};
    std::size_t repeats = 20;
    std::size_t tensors_per_file = 20;
    std::uint64_t seed = 1;
    std::size_t warmup = 1;
    /// Where the files for the open/access phases go; a fresh temp directory when empty.
    std::filesystem::path work_dir;
};

/// Monotonic seconds.
using BenchClock = std::function<double()>;
BenchClock steady_clock();

/// Phases: "serialize_plain" (no config, baseline), "serialize", "open",
/// "first_access", "second_access".
struct Row {
    std::string phase;
    std::uint64_t tensor_bytes = 0;
    double encrypted_fraction = 0;
    std::size_t encrypted_count = 0;
    double mean = 0;
    double stddev = 0;
    double median = 0;
    std::size_t n = 0;
    std::uint64_t header_bytes = 0;
    std::uint64_t body_bytes = 0;
};

struct Report {
    std::vector<Row> rows;
    std::map<std::string, std::string> environment;
};

/// The first round(fraction * n) names of one seeded permutation, so higher fractions
/// always select a superset of lower ones.
std::vector<std::string> nested_selection(const std::vector<std::string>& names, double fraction, std::uint64_t seed);

/// Names for one size class; unique across sizes.
std::vector<std::string> workload_names(std::uint64_t tensor_bytes, std::size_t count);

/// Throws Error{InvalidArgument} for an empty spec, Error{IoError} for file trouble.
Report run_matrix(const MatrixSpec& spec, const BenchClock& clock = steady_clock());

/// Columns: phase,tensor_bytes,encrypted_fraction,mean_seconds,header_bytes,body_bytes.
void write_csv(const Report& report, std::ostream& out);
void write_csv(const Report& report, const std::filesystem::path& path);

struct Finding {
    std::string check;
    bool passed = false;
    std::string detail;
};

/// Scale-free checks per tensor size:
///  - serialize_monotone: serialize medians nondecreasing in fraction, 10% slack
///  - decrypt_once: first_access > second_access medians wherever fraction > 0
///  - header_linear: R^2 >= 0.9 of header_bytes against encrypted_count
///  - partial_overhead: overhead(0.1) < overhead(1.0) / 2 on medians, measured against
///    serialize_plain (only when both fractions are present)
std::vector<Finding> assert_trends(const Report& report);

}  // namespace ct::bench
