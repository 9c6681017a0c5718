#include "ldawa/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "ldawa/errors.hpp"
#include "ldawa/rng.hpp"

namespace ldawa {

Dataset::Dataset(std::string name, std::size_t dim, std::size_t num_classes, std::vector<double> features,
                 std::vector<std::uint32_t> labels)
    : name_(std::move(name)),
      dim_(dim),
      num_classes_(num_classes),
      features_(std::move(features)),
      labels_(std::move(labels)) {
  if (dim_ == 0) throw ValidationError("dataset '" + name_ + "': dimension must be positive");
  if (num_classes_ == 0) throw ValidationError("dataset '" + name_ + "': need at least one class");
  if (features_.size() != labels_.size() * dim_) {
    throw ValidationError("dataset '" + name_ + "': " + std::to_string(features_.size()) +
                          " feature values for " + std::to_string(labels_.size()) + " samples of dim " +
                          std::to_string(dim_));
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] >= num_classes_) {
      throw ValidationError("dataset '" + name_ + "': sample " + std::to_string(i) + " has label " +
                            std::to_string(labels_[i]) + " outside [0, " + std::to_string(num_classes_) +
                            ")");
    }
  }
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> c(num_classes_, 0);
  for (auto l : labels_) ++c[l];
  return c;
}

std::vector<std::size_t> Dataset::indices_of_class(std::uint32_t c) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == c) out.push_back(i);
  }
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  std::vector<double> f;
  std::vector<std::uint32_t> l;
  f.reserve(indices.size() * dim_);
  l.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw ValidationError("subset index " + std::to_string(i) + " out of range");
    auto r = row(i);
    f.insert(f.end(), r.begin(), r.end());
    l.push_back(labels_[i]);
  }
  Dataset out;
  out.name_ = name_;
  out.dim_ = dim_;
  out.num_classes_ = num_classes_;
  out.features_ = std::move(f);
  out.labels_ = std::move(l);
  return out;
}

std::vector<std::vector<double>> blob_means(const BlobSpec& spec) {
  std::vector<std::vector<double>> means(spec.num_classes, std::vector<double>(spec.dim, 0.0));
  if (spec.num_classes <= spec.dim) {
    const double a = spec.separation / std::sqrt(2.0);
    for (std::size_t c = 0; c < spec.num_classes; ++c) means[c][c] = a;
    return means;
  }
  Rng rng(derive_seed(spec.seed, {stream::kData, 0}));
  std::normal_distribution<double> n01(0.0, 1.0);
  for (auto& m : means) {
    double s = 0.0;
    for (auto& x : m) {
      x = n01(rng);
      s += x * x;
    }
    const double scale = spec.separation / std::sqrt(s);
    for (auto& x : m) x *= scale;
  }
  return means;
}

Dataset make_blobs(const BlobSpec& spec, std::uint64_t sample_stream) {
  if (spec.num_classes == 0 || spec.samples_per_class == 0 || spec.dim == 0) {
    throw ValidationError("make_blobs: class count, samples per class and dimension must be positive");
  }
  if (spec.spread < 0.0) throw ValidationError("make_blobs: spread must be non-negative");
  const auto means = blob_means(spec);
  Rng rng(derive_seed(spec.seed, {stream::kData, sample_stream}));
  std::normal_distribution<double> n01(0.0, 1.0);

  const std::size_t n = spec.num_classes * spec.samples_per_class;
  std::vector<double> features;
  std::vector<std::uint32_t> labels;
  features.reserve(n * spec.dim);
  labels.reserve(n);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      for (std::size_t j = 0; j < spec.dim; ++j) {
        const double noise = n01(rng);
        features.push_back(means[c][j] + spec.spread * noise);
      }
      labels.push_back(static_cast<std::uint32_t>(c));
    }
  }
  return Dataset("blobs", spec.dim, spec.num_classes, std::move(features), std::move(labels));
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? line.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
  }
  return out;
}

}  // namespace

Dataset parse_csv(const std::string& text, std::string name, std::optional<std::size_t> num_classes) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;

  std::vector<std::string_view> header;
  std::string header_line;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    header_line = line;
    header = split_fields(header_line);
    break;
  }
  if (header.size() < 2) throw ParseError("CSV needs a header with at least one feature and a label column", lineno);

  std::size_t label_col = header.size() - 1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "label") label_col = i;
  }
  const std::size_t dim = header.size() - 1;

  std::vector<double> features;
  std::vector<std::uint32_t> labels;
  std::uint32_t max_label = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw ParseError("expected " + std::to_string(header.size()) + " columns, got " +
                           std::to_string(fields.size()),
                       lineno);
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const auto f = fields[i];
      if (i == label_col) {
        long long v = 0;
        auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
        if (ec != std::errc() || p != f.data() + f.size() || f.empty()) {
          throw ParseError("label '" + std::string(f) + "' is not an integer", lineno);
        }
        if (v < 0 || v > std::numeric_limits<std::uint32_t>::max()) {
          throw ParseError("label " + std::to_string(v) + " is out of range", lineno);
        }
        if (num_classes && static_cast<std::size_t>(v) >= *num_classes) {
          throw ParseError("label " + std::to_string(v) + " outside [0, " + std::to_string(*num_classes) + ")",
                           lineno);
        }
        labels.push_back(static_cast<std::uint32_t>(v));
        max_label = std::max(max_label, labels.back());
      } else {
        double v = 0.0;
        auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
        if (ec != std::errc() || p != f.data() + f.size() || f.empty() || !std::isfinite(v)) {
          throw ParseError("feature '" + std::string(f) + "' in column " + std::to_string(i + 1) +
                               " is not a finite number",
                           lineno);
        }
        features.push_back(v);
      }
    }
  }
  if (labels.empty()) throw ParseError("CSV '" + name + "' contains no samples");
  const std::size_t classes = num_classes.value_or(static_cast<std::size_t>(max_label) + 1);
  return Dataset(std::move(name), dim, classes, std::move(features), std::move(labels));
}

Dataset load_csv(const std::filesystem::path& path, std::optional<std::size_t> num_classes) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open CSV '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_csv(ss.str(), path.stem().string(), num_classes);
}

void save_csv(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  for (std::size_t j = 0; j < ds.dim(); ++j) f << 'f' << j << ',';
  f << "label\n";
  f << std::setprecision(17);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.row(i)) f << v << ',';
    f << ds.label(i) << '\n';
  }
}

}  // namespace ldawa
