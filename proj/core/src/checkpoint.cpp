#include "ldawa/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "ldawa/errors.hpp"

namespace ldawa::checkpoint {

namespace {

using nlohmann::json;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ParseError("checkpoint truncated at byte " + std::to_string(pos_));
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_binary(const ParamSet& params) {
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.num_layers()));
  std::uint64_t offset = 0;
  for (const auto& l : params.layers()) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.name().size()));
    out.insert(out.end(), l.name().begin(), l.name().end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.shape().size()));
    for (std::size_t d : l.shape()) put_le<std::uint64_t>(out, d);
    put_le<std::uint64_t>(out, offset);
    offset += l.size() * sizeof(double);
  }
  put_le<std::uint64_t>(out, offset);
  for (const auto& l : params.layers()) {
    for (double v : l.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

ParamSet decode_binary(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.get_string(kMagic.size()) != kMagic) throw ParseError("not an ldawa checkpoint (bad magic)");

  struct Entry {
    std::string name;
    Shape shape;
    std::uint64_t offset;
  };
  const auto count = r.get<std::uint32_t>();
  std::vector<Entry> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    e.name = r.get_string(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(r.get<std::uint64_t>());
    e.offset = r.get<std::uint64_t>();
    entries.push_back(std::move(e));
  }
  const auto payload_len = r.get<std::uint64_t>();
  if (r.remaining() != payload_len) {
    throw ParseError("checkpoint payload is " + std::to_string(r.remaining()) +
                     " bytes, header declares " + std::to_string(payload_len));
  }
  const auto payload = bytes.subspan(r.pos());

  std::vector<LayerTensor> layers;
  layers.reserve(entries.size());
  for (auto& e : entries) {
    const std::size_t n = shape_size(e.shape);
    if (e.offset % sizeof(double) != 0 || e.offset + n * sizeof(double) > payload.size()) {
      throw ParseError("layer '" + e.name + "' payload out of range");
    }
    Reader pr(payload.subspan(e.offset, n * sizeof(double)));
    std::vector<double> values(n);
    for (auto& v : values) v = std::bit_cast<double>(pr.get<std::uint64_t>());
    try {
      layers.emplace_back(std::move(e.name), std::move(e.shape), std::move(values));
    } catch (const ValidationError& err) {
      throw ParseError(err.what());
    }
  }
  try {
    return ParamSet(std::move(layers));
  } catch (const ValidationError& err) {
    throw ParseError(err.what());
  }
}

std::string encode_json(const ParamSet& params) {
  json layers = json::array();
  for (const auto& l : params.layers()) {
    layers.push_back({{"name", l.name()},
                      {"shape", l.shape()},
                      {"values", std::vector<double>(l.values().begin(), l.values().end())}});
  }
  json doc = {{"format", "ldawa-params"}, {"version", 1}, {"layers", std::move(layers)}};
  return doc.dump(1) + "\n";
}

ParamSet decode_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint JSON: ") + e.what());
  }
  try {
    if (doc.at("format") != "ldawa-params") throw ParseError("checkpoint JSON: unexpected format tag");
    if (doc.at("version") != 1) throw ParseError("checkpoint JSON: unsupported version");
    std::vector<LayerTensor> layers;
    for (const auto& l : doc.at("layers")) {
      layers.emplace_back(l.at("name").get<std::string>(), l.at("shape").get<Shape>(),
                          l.at("values").get<std::vector<double>>());
    }
    return ParamSet(std::move(layers));
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint JSON: ") + e.what());
  } catch (const ValidationError& e) {
    throw ParseError(std::string("checkpoint JSON: ") + e.what());
  }
}

void save(const std::filesystem::path& path, const ParamSet& params) {
  save(path, params, path.extension() == ".json" ? Format::kJson : Format::kBinary);
}

void save(const std::filesystem::path& path, const ParamSet& params, Format format) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  if (format == Format::kJson) {
    f << encode_json(params);
  } else {
    const auto bytes = encode_binary(params);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

ParamSet load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() >= kMagic.size() &&
      std::equal(kMagic.begin(), kMagic.end(), reinterpret_cast<const char*>(bytes.data()))) {
    return decode_binary(bytes);
  }
  return decode_json(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace ldawa::checkpoint
