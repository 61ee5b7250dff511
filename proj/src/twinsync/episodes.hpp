#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "twinsync/nn.hpp"

namespace twinsync::episodes {

using nn::Sample;

// A bijection over feature indices: feature i of a permuted sample is
// feature order[i] of the base sample.
struct Permutation {
    std::vector<std::size_t> order;

    static Permutation identity(std::size_t n);
    static Permutation random(std::size_t n, std::uint64_t seed);

    bool is_bijection() const;
    Permutation inverse() const;
    std::vector<double> apply(const std::vector<double>& x) const;

    bool operator==(const Permutation&) const = default;
};

struct EpisodeDataset {
    std::size_t index = 0;
    std::vector<Sample> samples;
    std::uint64_t permutation_seed = 0;
    Permutation permutation;

    std::size_t size() const { return samples.size(); }
    bool operator==(const EpisodeDataset&) const = default;
};

struct AccumulatedDataset {
    std::vector<EpisodeDataset> episodes;

    std::size_t total_size() const;
    std::vector<Sample> flatten() const;
};

// Header of an IDX file, as stored on disk.
struct IdxHeader {
    std::uint32_t magic = 0;
    std::vector<std::uint32_t> dims;
    std::size_t payload_bytes = 0;
    std::uint32_t crc32 = 0;  // of the decompressed file contents
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Reads a whole file, inflating it when the name ends in ".gz".
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
IdxHeader inspect_idx(const std::filesystem::path& path);
std::vector<Sample> load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// Seed for per-episode randomness derived from the single user-facing seed.
std::uint64_t episode_seed(std::uint64_t master_seed, std::size_t k, std::uint64_t stream = 0);

// Draws `count` samples from a seeded shuffle of `base` and applies the
// episode's feature permutation. Episode 0 keeps the identity permutation.
EpisodeDataset make_episode(const std::vector<Sample>& base, std::size_t k, std::uint64_t master_seed, std::size_t count);

// Same permutation as make_episode(k, master_seed) but drawn from a
// held-out split with an independent shuffle.
EpisodeDataset make_test_split(const std::vector<Sample>& base, std::size_t k, std::uint64_t master_seed,
                               std::size_t count);

Permutation episode_permutation(std::size_t k, std::uint64_t master_seed, std::size_t width);

// Gaussian class clusters with means on a sphere of radius 4, rescaled into
// [0,1]. Labels are assigned round-robin.
std::vector<Sample> make_synthetic(std::uint64_t seed, std::size_t classes, std::size_t dim, std::size_t count);

inline constexpr double kSyntheticRadius = 4.0;
// Affine map from cluster space into [0,1]: x -> 0.5 + x / (2 * span).
inline constexpr double kSyntheticSpan = kSyntheticRadius + 3.0;

AccumulatedDataset accumulate(std::vector<EpisodeDataset> episodes);

}  // namespace twinsync::episodes
