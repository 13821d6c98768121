#pragma once

// CIFAR-100 binary records: 1 coarse-label byte, 1 fine-label byte, then
// 3072 pixel bytes as three 32x32 planes (R, G, B).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <vector>

#include "evc/tensor.hpp"

namespace evc {

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarPixels = 3 * kCifarSide * kCifarSide;
inline constexpr std::size_t kCifarRecordBytes = 2 + kCifarPixels;

/// The dataset directory or one of its files is absent.
class MissingDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetBatch {
  Tensor images;  // [b, 3, 32, 32], values in [0, 1]
  std::vector<int> labels;
};

struct CifarRecord {
  std::uint8_t coarse = 0;
  std::uint8_t fine = 0;
  std::vector<std::uint8_t> pixels;  // kCifarPixels bytes
};

struct CifarLoadOptions {
  /// Fine labels to keep, relabeled 0..k-1 in ascending label order. Unset keeps all 100.
  std::optional<std::set<int>> class_filter;
  /// Cap on records kept per class; 0 means no cap.
  std::size_t per_class_limit = 0;
  /// Exact record count the file must hold, if known.
  std::optional<std::size_t> expected_records;
  /// Shuffle seed applied after filtering; unset keeps file order.
  std::optional<std::uint64_t> shuffle_seed;
  std::size_t batch_size = 128;
};

/// Throws FormatError (with byte offset) for truncated files or a record
/// count mismatch, std::runtime_error if the file cannot be opened.
std::vector<CifarRecord> read_cifar100_records(const std::filesystem::path& path,
                                               std::optional<std::size_t> expected_records = {});
void write_cifar100_records(const std::filesystem::path& path, const std::vector<CifarRecord>& records);

std::vector<DatasetBatch> load_cifar100(const std::filesystem::path& path,
                                        const CifarLoadOptions& options = {});

/// Splits one big batch into consecutive chunks of at most batch_size.
std::vector<DatasetBatch> split_batches(const DatasetBatch& all, std::size_t batch_size);
/// Concatenates batches back into one.
DatasetBatch concat_batches(const std::vector<DatasetBatch>& batches);

}  // namespace evc
