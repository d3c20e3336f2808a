#pragma once

#include "uktl/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace uktl {

struct ManifestEntry {
    std::string path;  // relative to the manifest's directory
    int label = 0;
};

struct DatasetManifest {
    std::vector<int> dims;
    int num_classes = 0;
    std::vector<ManifestEntry> entries;
};

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// In-memory dataset: tensors decoded and validated against the manifest.
struct Dataset {
    std::vector<int> dims;
    int num_classes = 0;
    std::vector<Tensor> tensors;
    std::vector<int> labels;

    int size() const { return static_cast<int>(tensors.size()); }
};

Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Synthetic subspace-clustered data: per class, fixed orthonormal factor
/// bases per mode; each sample is a random core expanded through the class
/// bases (rescaled to unit RMS per entry) plus noise_level * N(0,1) noise.
struct SyntheticSpec {
    int num_classes = 3;
    int per_class = 100;
    std::vector<int> dims{8, 10, 12};
    int signal_rank = 4;
    double noise_level = 0.3;
    std::uint64_t seed = 0;

    void validate() const;
};

struct GenResult {
    DatasetManifest train;
    DatasetManifest test;
    std::filesystem::path train_manifest;
    std::filesystem::path test_manifest;
};

/// Writes tensor files plus train.json / test.json into out_dir
/// (class-balanced 80/20 split by seeded shuffle). Deterministic: the same
/// spec produces byte-identical files.
GenResult gen_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

/// Builds the same tensors/labels as gen_synthetic without touching disk.
Dataset gen_synthetic_memory(const SyntheticSpec& spec, bool train_split);

/// seq has dims d x J x T. Subtracts the reference joint per frame, then
/// scales each axis into [-1, 1] by its max absolute value over all frames
/// and joints (degenerate axes pass through as zeros).
Tensor normalize_skeleton(const Tensor& seq, int ref_joint);

/// Last mode is time. Shorter sequences repeat cyclically; longer ones are
/// uniformly sampled with both endpoints kept.
Tensor temporal_resample(const Tensor& seq, int target_frames = 200);

/// Overlapping blocks of length block_len at the given stride along the
/// last mode; count = floor((T - block_len) / stride) + 1.
std::vector<Tensor> temporal_blocks(const Tensor& seq, int block_len, int stride);

std::string matrix_to_csv(const Matrix& m);
void write_csv(const Matrix& m, const std::filesystem::path& path);

}  // namespace uktl
