#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ldawa {

/// Labelled feature vectors. Features are stored row-major, one row per sample.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::string name, std::size_t dim, std::size_t num_classes, std::vector<double> features,
          std::vector<std::uint32_t> labels);

  const std::string& name() const noexcept { return name_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }

  std::span<const double> features() const noexcept { return features_; }
  std::span<const double> row(std::size_t i) const { return {features_.data() + i * dim_, dim_}; }
  std::span<const std::uint32_t> labels() const noexcept { return labels_; }
  std::uint32_t label(std::size_t i) const { return labels_[i]; }

  /// Per-class sample counts, length num_classes().
  std::vector<std::size_t> class_counts() const;
  /// Indices of every sample with the given label, ascending.
  std::vector<std::size_t> indices_of_class(std::uint32_t c) const;

  /// Copy of the selected rows, in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;

 private:
  std::string name_;
  std::size_t dim_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<double> features_;
  std::vector<std::uint32_t> labels_;
};

struct BlobSpec {
  std::size_t num_classes = 8;
  std::size_t samples_per_class = 200;
  std::size_t dim = 16;
  double spread = 0.5;
  double separation = 4.0;  // distance between any two class means
  std::uint64_t seed = 0;
};

/// Isotropic Gaussian clusters. When num_classes <= dim the class means sit on
/// a scaled simplex (mean_c = separation / sqrt(2) * e_c), so every pair of
/// means is exactly `separation` apart. Otherwise means are drawn on a sphere
/// of radius separation from a seeded stream. Samples are emitted class by class.
/// Different sample streams share the means and draw independent noise, which
/// gives matching train and test sets.
Dataset make_blobs(const BlobSpec& spec, std::uint64_t sample_stream = 1);

/// The class means make_blobs uses for `spec`.
std::vector<std::vector<double>> blob_means(const BlobSpec& spec);

/// Reads a CSV with one header row, numeric feature columns and one integer
/// label column (the column named "label", otherwise the last column).
/// When num_classes is given, labels must lie in [0, num_classes); otherwise
/// it is max(label) + 1.
Dataset load_csv(const std::filesystem::path& path,
                 std::optional<std::size_t> num_classes = std::nullopt);
Dataset parse_csv(const std::string& text, std::string name,
                  std::optional<std::size_t> num_classes = std::nullopt);

/// Writes f0..f{d-1},label.
void save_csv(const std::filesystem::path& path, const Dataset& ds);

}  // namespace ldawa
