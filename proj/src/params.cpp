#include "prunekit/params.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "prunekit/error.hpp"

namespace prunekit {

std::size_t TensorSpec::size() const noexcept {
  std::size_t n = 1;
  for (const auto d : shape) n *= d;
  return n;
}

LayoutPtr Layout::make(std::vector<std::pair<std::string, std::vector<std::size_t>>> tensors) {
  std::vector<TensorSpec> specs;
  std::size_t offset = 0;
  for (auto& [name, shape] : tensors) {
    TensorSpec spec{std::move(name), std::move(shape), offset};
    offset += spec.size();
    specs.push_back(std::move(spec));
  }
  return from_specs(std::move(specs));
}

LayoutPtr Layout::from_specs(std::vector<TensorSpec> specs) {
  auto layout = std::make_shared<Layout>();
  std::size_t expected = 0;
  for (const auto& s : specs) {
    if (s.offset != expected) {
      throw Error(ErrorCode::MalformedFile, "tensor '" + s.name + "' is not contiguous with its predecessor");
    }
    expected += s.size();
  }
  layout->tensors_ = std::move(specs);
  layout->total_ = expected;
  return layout;
}

const TensorSpec& Layout::tensor(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw Error(ErrorCode::ShapeError, "no tensor named '" + name + "'");
}

bool same_layout(const LayoutPtr& a, const LayoutPtr& b) noexcept {
  if (a == b) return true;
  if (!a || !b) return false;
  return *a == *b;
}

void require_same_layout(const LayoutPtr& a, const LayoutPtr& b, const char* what) {
  if (!same_layout(a, b)) throw Error(ErrorCode::ShapeError, std::string(what) + ": layout mismatch");
}

namespace detail {

template <typename Tag>
FlatVector<Tag>::FlatVector(LayoutPtr layout, std::vector<double> values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (!layout_ || layout_->total_size() != values_.size()) {
    throw Error(ErrorCode::ShapeError, "value count does not match layout");
  }
}

template <typename Tag>
std::span<double> FlatVector<Tag>::tensor(const std::string& name) {
  const auto& t = layout_->tensor(name);
  return std::span<double>(values_).subspan(t.offset, t.size());
}

template <typename Tag>
std::span<const double> FlatVector<Tag>::tensor(const std::string& name) const {
  const auto& t = layout_->tensor(name);
  return std::span<const double>(values_).subspan(t.offset, t.size());
}

template class FlatVector<ParamTag>;
template class FlatVector<GradTag>;

}  // namespace detail

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (const double x : v) s += x * x;
  return std::sqrt(s);
}

bool all_finite(std::span<const double> v) {
  for (const double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

namespace {

constexpr char kMagic[] = "CPKT1";

std::uint64_t to_little_endian(std::uint64_t x) {
  if constexpr (std::endian::native == std::endian::big) {
    x = ((x & 0x00000000ffffffffULL) << 32) | (x >> 32);
    x = ((x & 0x0000ffff0000ffffULL) << 16) | ((x >> 16) & 0x0000ffff0000ffffULL);
    x = ((x & 0x00ff00ff00ff00ffULL) << 8) | ((x >> 8) & 0x00ff00ff00ff00ffULL);
  }
  return x;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamVector& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write '" + path + "'");
  out << kMagic << '\n';
  out << "tensors " << params.layout()->tensors().size() << '\n';
  for (const auto& t : params.layout()->tensors()) {
    out << t.name << ' ' << t.offset << ' ' << t.shape.size();
    for (const auto d : t.shape) out << ' ' << d;
    out << '\n';
  }
  out << "values " << params.size() << '\n';
  for (const double v : params.values()) {
    const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
    out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  if (!out) throw Error(ErrorCode::FileNotFound, "write failed for '" + path + "'");
}

ParamVector load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open '" + path + "'");
  auto bad = [&](const std::string& why) { return Error(ErrorCode::MalformedFile, path + ": " + why); };

  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw bad("missing CPKT1 magic");
  std::size_t count = 0;
  {
    if (!std::getline(in, line)) throw bad("truncated header");
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key >> count) || key != "tensors") throw bad("expected 'tensors <n>'");
  }
  std::vector<TensorSpec> specs;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw bad("truncated tensor table");
    std::istringstream ls(line);
    TensorSpec spec;
    std::size_t ndim = 0;
    if (!(ls >> spec.name >> spec.offset >> ndim)) throw bad("malformed tensor line");
    spec.shape.resize(ndim);
    for (auto& d : spec.shape) {
      if (!(ls >> d)) throw bad("malformed tensor shape");
    }
    specs.push_back(std::move(spec));
  }
  auto layout = Layout::from_specs(std::move(specs));
  std::size_t total = 0;
  {
    if (!std::getline(in, line)) throw bad("truncated header");
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key >> total) || key != "values") throw bad("expected 'values <n>'");
  }
  if (total != layout->total_size()) throw bad("value count disagrees with layout");

  const auto data_start = in.tellg();
  in.seekg(0, std::ios::end);
  const auto data_bytes = static_cast<std::size_t>(in.tellg() - data_start);
  if (data_bytes != total * sizeof(double)) {
    throw bad("payload is " + std::to_string(data_bytes) + " bytes, expected " +
              std::to_string(total * sizeof(double)));
  }
  in.seekg(data_start);
  std::vector<double> values(total);
  for (auto& v : values) {
    std::uint64_t bits = 0;
    in.read(reinterpret_cast<char*>(&bits), sizeof bits);
    v = std::bit_cast<double>(to_little_endian(bits));
  }
  if (!in) throw bad("short read");
  return ParamVector(std::move(layout), std::move(values));
}

}  // namespace prunekit
