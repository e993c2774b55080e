#include "reasonlab/parameters.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "reasonlab/error.hpp"

namespace reasonlab {

void ParameterSet::add(std::string name, std::vector<std::size_t> shape) {
  for (const auto& s : specs_) {
    if (s.name == name) throw Error(ErrorKind::kInvalidArgument, "duplicate parameter array " + name);
  }
  ArraySpec spec;
  spec.name = std::move(name);
  spec.size = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  spec.shape = std::move(shape);
  spec.offset = values_.size();
  values_.resize(values_.size() + spec.size, 0.0);
  specs_.push_back(std::move(spec));
}

const ArraySpec& ParameterSet::spec(std::string_view name) const {
  for (const auto& s : specs_) {
    if (s.name == name) return s;
  }
  throw Error(ErrorKind::kInvalidArgument, "no parameter array named " + std::string(name));
}

std::span<double> ParameterSet::array(std::string_view name) {
  const auto& s = spec(name);
  return std::span<double>(values_).subspan(s.offset, s.size);
}

std::span<const double> ParameterSet::array(std::string_view name) const {
  const auto& s = spec(name);
  return std::span<const double>(values_).subspan(s.offset, s.size);
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
  if (specs_.size() != other.specs_.size()) return false;
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (specs_[i].name != other.specs_[i].name || specs_[i].shape != other.specs_[i].shape) return false;
  }
  return true;
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  out.specs_ = specs_;
  out.values_.assign(values_.size(), 0.0);
  return out;
}

bool ParameterSet::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

void ParameterSet::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

}  // namespace reasonlab
