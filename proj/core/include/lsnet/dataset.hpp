#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lsnet/tensor.hpp"

namespace lsnet {

/// One bitemporal record: before image, after image, change mask.
struct DatasetRecord {
  std::string name;  // shared filename
  std::string image_a;
  std::string image_b;
  std::string mask;
};

/// Index of an A/, B/, OUT/ directory layout. Records are sorted by
/// filename; files missing a counterpart are reported in `warnings`, never
/// silently dropped.
struct DatasetIndex {
  std::string root;
  std::vector<DatasetRecord> records;
  std::vector<std::string> warnings;
};

/// Scans root/A, root/B, root/OUT for .png/.ppm triples. Throws IoError
/// when the directories are missing or no complete triple exists.
DatasetIndex index_dataset(const std::string& root);

/// Synthetic change-pair generator configuration. For a fixed seed the
/// generator is a pure function of the sample index.
struct SynthConfig {
  std::uint64_t seed = 1;
  int image_size = 64;
  int min_shapes = 2;   // shared background shapes
  int max_shapes = 5;
  int min_changes = 1;  // inserted/deleted change shapes
  int max_changes = 3;
  float noise_amplitude = 0.04f;  // illumination / sensor-noise stand-in
  float min_mask_fraction = 0.02f;
  float max_mask_fraction = 0.30f;

  void validate() const;
};

struct SynthPair {
  Tensor t1;    // (1, 3, S, S)
  Tensor t2;    // (1, 3, S, S); t1 + changes + noise + brightness shift
  Tensor mask;  // (1, 1, S, S), exact {0,1} change pixels
};

/// Deterministic sample `index` of the stream defined by `cfg`. Noise and
/// the global brightness shift stay strictly below the configured amplitude
/// on unchanged pixels, so thresholding |t1 - t2| at the amplitude never
/// marks an unchanged pixel.
SynthPair generate_synthetic_pair(const SynthConfig& cfg, std::uint64_t index);

/// Writes `count` synthetic pairs as PNG triples under root/A, root/B,
/// root/OUT (images 000000.png, 000001.png, ...).
void write_synthetic_dataset(const SynthConfig& cfg, const std::string& root, int count,
                             std::uint64_t first_index = 0);

}  // namespace lsnet
