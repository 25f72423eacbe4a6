#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "icl/attention.hpp"
#include "icl/linalg.hpp"
#include "icl/taskgen.hpp"

namespace icl {

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;  // sample standard deviation / √n_samples
    std::int64_t n_samples = 0;
    std::uint64_t seed = 0;
};

// Running mean and sum of squared deviations for a fixed number of
// components (Welford), mergeable with Chan's pairwise update.
class Welford {
public:
    explicit Welford(int components = 1);
    void add(const double* values);
    void add(double value) { add(&value); }
    void merge(const Welford& other);
    std::int64_t count() const { return count_; }
    McEstimate estimate(int component, std::uint64_t seed) const;

private:
    std::int64_t count_ = 0;
    std::vector<double> mean_;
    std::vector<double> m2_;
};

// Samples are processed in fixed chunks of this size; per-chunk accumulators
// are combined by a pairwise tree in chunk order, so the result is
// bit-identical for every worker count.
inline constexpr std::int64_t kMcChunk = 2048;

// Generic driver: sample(i, out) writes `components` values for sample i.
std::vector<McEstimate> mc_accumulate(std::int64_t n_samples, int components, std::uint64_t seed,
                                      const std::function<void(std::int64_t, double*)>& sample);

// Empirical n-shot test error on a fixed task (n = 0 uses the zero-shot
// prediction). Sample i uses SampleStreams::for_sample(seed, i).
McEstimate mc_test_error(const AttentionParams& p, const TaskSpec& task, int n, std::int64_t n_samples,
                         std::uint64_t seed);

// mc_test_error for each n in the list, all with the same seed.
std::vector<McEstimate> mc_sweep(const AttentionParams& p, const TaskSpec& task, const std::vector<int>& n_list,
                                 std::int64_t n_samples, std::uint64_t seed);

enum class MomentKind { WishartQuad, Quartic, SexticScalar, SexticMatrix, PredictionMoments };

MomentKind moment_kind_from_string(const std::string& name);

// Inputs for mc_moment; each kind reads only the fields it needs.
struct MomentInputs {
    SymMatrix sigma;           // WishartQuad, Quartic, SexticScalar, SexticMatrix
    Mat a, b, c;               // A (and B, C) of the identity being checked
    int n = 1;                 // WishartQuad: number of summands; PredictionMoments: context length
    AttentionParams params;    // PredictionMoments
    TaskSpec task;             // PredictionMoments
};

// Sample-mean estimates of:
//   WishartQuad       W A W, W = Σᵢ₌₁ⁿ xᵢxᵢᵀ        (d² entries, row-major)
//   Quartic           xᵀAx · xᵀBx                   (1)
//   SexticScalar      xᵀAx · xᵀBx · xᵀCx            (1)
//   SexticMatrix      x xᵀA x xᵀB x xᵀ              (d² entries, row-major)
//   PredictionMoments E[N²], E[Z²], E[y²], E[NZ], E[Ny], E[Zy] in MomentReport order
std::vector<McEstimate> mc_moment(MomentKind kind, const MomentInputs& in, std::int64_t n_samples,
                                  std::uint64_t seed);

}  // namespace icl
