#pragma once

#include <array>
#include <cstdint>

namespace icl {

// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as
// easy as 1, 2, 3"). Exposed for known-answer testing.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key);

// Counter-based generator: the draw sequence is a pure function of
// (key, stream), so any number of generators can be created independently on
// any thread and always reproduce the same numbers.
class Rng {
public:
    Rng(std::uint64_t key, std::uint64_t stream);

    std::uint64_t next_u64();
    // Uniform on the open interval (0, 1).
    double uniform();
    // Standard normal via Box–Muller; both outputs of each pair are used.
    double normal();

private:
    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int buf_pos_ = 4;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

// Purpose-specific stream indices. Keeping tasks, inputs and noise on separate
// streams means changing one (e.g. the noise level) never perturbs the others.
enum class Stream : std::uint64_t { Tasks = 0, Prompts = 1, Noise = 2 };

// The three per-purpose generators for one sample. The key is
// mix_seed(seed) ⊕ counter,
// so sample `counter` draws the same numbers regardless of which worker runs it.
struct SampleStreams {
    Rng tasks;
    Rng prompts;
    Rng noise;

    static SampleStreams for_sample(std::uint64_t seed, std::uint64_t counter);
};

// SplitMix64 finalizer; derives well-separated sub-seeds from a master seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace icl
