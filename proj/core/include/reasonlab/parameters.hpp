#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace reasonlab {

struct ArraySpec {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Named real-valued arrays stored back to back in one flat buffer, in
// insertion order. Gradients use the same type with an identical layout.
class ParameterSet {
 public:
  // Appends a zero-filled array.
  void add(std::string name, std::vector<std::size_t> shape);

  const std::vector<ArraySpec>& specs() const { return specs_; }
  std::size_t size() const { return values_.size(); }

  // Throws kInvalidArgument for unknown names.
  const ArraySpec& spec(std::string_view name) const;
  std::span<double> array(std::string_view name);
  std::span<const double> array(std::string_view name) const;

  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }

  bool same_layout(const ParameterSet& other) const;
  ParameterSet zeros_like() const;
  bool all_finite() const;
  void fill(double value);

 private:
  std::vector<ArraySpec> specs_;
  std::vector<double> values_;
};

}  // namespace reasonlab
