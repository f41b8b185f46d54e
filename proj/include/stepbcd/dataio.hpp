#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "stepbcd/matrix.hpp"
#include "stepbcd/network.hpp"
#include "stepbcd/rng.hpp"

namespace stepbcd {

/// Inputs X (d_0 x N, one sample per column) and one-hot labels Y (classes x N).
struct Dataset {
  Matrix X;
  Matrix Y;
  std::vector<std::string> names;

  std::size_t size() const noexcept { return X.cols(); }
  std::size_t input_dim() const noexcept { return X.rows(); }
  std::size_t classes() const noexcept { return Y.rows(); }

  /// Class index of sample s.
  std::size_t label(std::size_t s) const;

  /// Samples `indices` in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;
  /// The first n samples after a seeded shuffle (all of them if n >= size()).
  Dataset shuffled_prefix(std::size_t n, Rng& rng) const;

  /// Throws DataError unless Y columns are one-hot and counts agree.
  void validate() const;
};

/// Raw IDX image tensor (magic 0x00000803).
struct IdxImages {
  std::size_t count = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols, sample-major
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

IdxImages load_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path);
void write_idx_images(const std::filesystem::path& path, const IdxImages& images);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

/// Pixels scaled by 1/255 into columns of X; labels one-hot encoded into Y.
Dataset to_dataset(const IdxImages& images, std::span<const std::uint8_t> labels,
                   std::size_t num_classes);

/// CSV with one sample per line, features in [0,1] followed by an integer label.
Dataset load_csv_dataset(const std::filesystem::path& path, std::size_t num_classes);

/// X + Normal(0, sigma^2) noise per entry, optionally clamped to [0,1]. Y untouched.
Dataset add_gaussian_noise(const Dataset& data, double sigma, Rng& rng, bool clamp = true);

struct Checkpoint {
  TrainState state;
  NetworkShape shape;
  Hyperparams hp;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout, all integers and floats little-endian:
///   "STEPBCD\0" | u32 version | u32 h | u64 d_0..d_h | u64 N |
///   f64 tau, pi, gamma, lambda, beta, eps_tiny | u64 L, K |
///   W_1..W_h, U_1..U_h, V_1..V_{h-1} as (u64 rows, u64 cols, f64 row-major) |
///   u32 CRC-32 of all preceding bytes
void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     const NetworkShape& shape, const Hyperparams& hp);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws DataError(ShapeMismatch) unless the checkpoint was written for `expected`.
void require_shape(const Checkpoint& checkpoint, const NetworkShape& expected);

}  // namespace stepbcd
