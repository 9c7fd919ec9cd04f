#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace prunekit {

struct TensorSpec {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;

  std::size_t size() const noexcept;
  bool operator==(const TensorSpec&) const = default;
};

/// Ordered, contiguous tensor layout of a flat parameter vector.
class Layout {
 public:
  Layout() = default;
  /// Offsets are assigned contiguously in the order given.
  static std::shared_ptr<const Layout> make(std::vector<std::pair<std::string, std::vector<std::size_t>>> tensors);
  /// Validates contiguity; throws MalformedFile otherwise.
  static std::shared_ptr<const Layout> from_specs(std::vector<TensorSpec> specs);

  const std::vector<TensorSpec>& tensors() const noexcept { return tensors_; }
  std::size_t total_size() const noexcept { return total_; }
  const TensorSpec& tensor(const std::string& name) const;

  bool operator==(const Layout& o) const { return tensors_ == o.tensors_; }

 private:
  std::vector<TensorSpec> tensors_;
  std::size_t total_ = 0;
};

using LayoutPtr = std::shared_ptr<const Layout>;

bool same_layout(const LayoutPtr& a, const LayoutPtr& b) noexcept;
/// Throws ShapeError when the layouts differ.
void require_same_layout(const LayoutPtr& a, const LayoutPtr& b, const char* what);

namespace detail {

template <typename Tag>
class FlatVector {
 public:
  FlatVector() = default;
  explicit FlatVector(LayoutPtr layout) : layout_(std::move(layout)), values_(layout_->total_size(), 0.0) {}
  FlatVector(LayoutPtr layout, std::vector<double> values);

  const LayoutPtr& layout() const noexcept { return layout_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  std::span<double> tensor(const std::string& name);
  std::span<const double> tensor(const std::string& name) const;

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  bool operator==(const FlatVector& o) const { return same_layout(layout_, o.layout_) && values_ == o.values_; }

 private:
  LayoutPtr layout_;
  std::vector<double> values_;
};

struct ParamTag;
struct GradTag;

}  // namespace detail

using ParamVector = detail::FlatVector<detail::ParamTag>;
using GradVector = detail::FlatVector<detail::GradTag>;

double l2_norm(std::span<const double> v);
bool all_finite(std::span<const double> v);

/// CPKT1 checkpoint: magic line, text layout header, then little-endian float64 values.
void save_checkpoint(const std::string& path, const ParamVector& params);
ParamVector load_checkpoint(const std::string& path);

}  // namespace prunekit
