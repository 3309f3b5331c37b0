#include "orgpose/numerics/parameters.hpp"

#include <algorithm>

#include "orgpose/error.hpp"

namespace orgpose::nn {

std::string Parameter::group() const {
  const auto dot = name.find('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

Parameter& ParameterStore::add(std::string name, Tensor value) {
  if (find(name)) throw Error("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->grad = Tensor::zeros_like(value);
  p->value = std::move(value);
  p->trainable = true;
  items_.push_back(std::move(p));
  return *items_.back();
}

Parameter& ParameterStore::add_buffer(std::string name, Tensor value) {
  if (find(name)) throw Error("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->value = std::move(value);
  p->trainable = false;
  items_.push_back(std::move(p));
  return *items_.back();
}

Parameter* ParameterStore::find(std::string_view name) noexcept {
  for (auto& p : items_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Parameter* ParameterStore::find(std::string_view name) const noexcept {
  for (const auto& p : items_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

Parameter& ParameterStore::at(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw Error("unknown parameter '" + std::string(name) + "'");
}

const Parameter& ParameterStore::at(std::string_view name) const {
  if (const auto* p = find(name)) return *p;
  throw Error("unknown parameter '" + std::string(name) + "'");
}

std::vector<Parameter*> ParameterStore::trainable() {
  std::vector<Parameter*> out;
  for (auto& p : items_) {
    if (p->trainable) out.push_back(p.get());
  }
  return out;
}

std::vector<const Parameter*> ParameterStore::trainable() const {
  std::vector<const Parameter*> out;
  for (const auto& p : items_) {
    if (p->trainable) out.push_back(p.get());
  }
  return out;
}

std::vector<std::string> ParameterStore::groups() const {
  std::vector<std::string> out;
  for (const auto& p : items_) {
    if (!p->trainable) continue;
    auto g = p->group();
    if (std::find(out.begin(), out.end(), g) == out.end()) out.push_back(std::move(g));
  }
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& p : items_) {
    if (p->trainable) p->grad.fill(0.0);
  }
}

std::size_t ParameterStore::trainable_element_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) {
    if (p->trainable) n += p->value.size();
  }
  return n;
}

}  // namespace orgpose::nn
