#include "evc/cifar.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <stdexcept>
#include <string>

#include "evc/error.hpp"

namespace evc {

std::vector<CifarRecord> read_cifar100_records(const std::filesystem::path& path,
                                               std::optional<std::size_t> expected_records) {
  if (!std::filesystem::is_regular_file(path)) throw MissingDataError("no such file: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  const std::size_t whole = bytes.size() / kCifarRecordBytes;
  if (bytes.size() % kCifarRecordBytes != 0) {
    throw FormatError(path.string() + ": record " + std::to_string(whole) +
                      " truncated at byte offset " + std::to_string(bytes.size()) + " (expected " +
                      std::to_string((whole + 1) * kCifarRecordBytes) + ")");
  }
  if (expected_records && whole != *expected_records) {
    throw FormatError(path.string() + ": expected " + std::to_string(*expected_records) +
                      " records but the file ends at byte offset " + std::to_string(bytes.size()) +
                      " after " + std::to_string(whole));
  }
  std::vector<CifarRecord> records(whole);
  for (std::size_t r = 0; r < whole; ++r) {
    const auto* rec = bytes.data() + r * kCifarRecordBytes;
    if (rec[1] >= 100) {
      throw FormatError(path.string() + ": fine label " + std::to_string(rec[1]) +
                        " out of range at byte offset " + std::to_string(r * kCifarRecordBytes + 1));
    }
    records[r].coarse = rec[0];
    records[r].fine = rec[1];
    records[r].pixels.assign(rec + 2, rec + kCifarRecordBytes);
  }
  return records;
}

void write_cifar100_records(const std::filesystem::path& path,
                            const std::vector<CifarRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records) {
    if (r.pixels.size() != kCifarPixels) {
      throw std::invalid_argument("CIFAR record must carry exactly 3072 pixel bytes");
    }
    out.put(static_cast<char>(r.coarse));
    out.put(static_cast<char>(r.fine));
    out.write(reinterpret_cast<const char*>(r.pixels.data()),
              static_cast<std::streamsize>(r.pixels.size()));
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<DatasetBatch> load_cifar100(const std::filesystem::path& path,
                                        const CifarLoadOptions& options) {
  if (options.batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (options.class_filter && options.class_filter->empty()) return {};
  const auto records = read_cifar100_records(path, options.expected_records);

  std::map<int, int> relabel;
  if (options.class_filter) {
    int next = 0;
    for (int c : *options.class_filter) {
      if (c < 0 || c >= 100) throw std::invalid_argument("CIFAR-100 class ids are 0..99");
      relabel[c] = next++;
    }
  }

  std::vector<std::size_t> kept;
  std::map<int, std::size_t> per_class;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int fine = records[i].fine;
    if (options.class_filter && !relabel.contains(fine)) continue;
    if (options.per_class_limit != 0 && per_class[fine] >= options.per_class_limit) continue;
    ++per_class[fine];
    kept.push_back(i);
  }
  if (options.shuffle_seed) {
    std::mt19937_64 rng(*options.shuffle_seed);
    std::shuffle(kept.begin(), kept.end(), rng);
  }
  if (kept.empty()) return {};

  DatasetBatch all{Tensor({kept.size(), 3, kCifarSide, kCifarSide}), {}};
  all.labels.reserve(kept.size());
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const auto& rec = records[kept[k]];
    for (std::size_t p = 0; p < kCifarPixels; ++p) {
      all.images[k * kCifarPixels + p] = static_cast<double>(rec.pixels[p]) / 255.0;
    }
    all.labels.push_back(options.class_filter ? relabel.at(rec.fine) : rec.fine);
  }
  return split_batches(all, options.batch_size);
}

std::vector<DatasetBatch> split_batches(const DatasetBatch& all, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  std::vector<DatasetBatch> out;
  if (all.labels.empty()) return out;
  auto shape = all.images.shape();
  const std::size_t total = shape[0];
  const std::size_t stride = all.images.size() / total;
  for (std::size_t start = 0; start < total; start += batch_size) {
    const std::size_t count = std::min(batch_size, total - start);
    shape[0] = count;
    const auto first = all.images.storage().begin() + static_cast<std::ptrdiff_t>(start * stride);
    out.push_back({Tensor(shape, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * stride))),
                   std::vector<int>(all.labels.begin() + static_cast<std::ptrdiff_t>(start),
                                    all.labels.begin() + static_cast<std::ptrdiff_t>(start + count))});
  }
  return out;
}

DatasetBatch concat_batches(const std::vector<DatasetBatch>& batches) {
  if (batches.empty()) return {};
  auto shape = batches.front().images.shape();
  std::vector<double> data;
  std::vector<int> labels;
  for (const auto& b : batches) {
    data.insert(data.end(), b.images.storage().begin(), b.images.storage().end());
    labels.insert(labels.end(), b.labels.begin(), b.labels.end());
  }
  shape[0] = labels.size();
  return {Tensor(shape, std::move(data)), std::move(labels)};
}

}  // namespace evc
