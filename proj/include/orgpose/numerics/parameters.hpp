#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "orgpose/numerics/tensor.hpp"

namespace orgpose::nn {

/// A named tensor owned by a ParameterStore. Trainable parameters carry a
/// gradient accumulator; buffers (running statistics) do not.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  /// Prefix of the name up to the first '.', used to report per-module results.
  std::string group() const;
};

/// Ordered collection with stable element addresses, so layers can hold raw
/// pointers to their parameters for the lifetime of the store.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Parameter& add(std::string name, Tensor value);
  Parameter& add_buffer(std::string name, Tensor value);

  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  Parameter* find(std::string_view name) noexcept;
  const Parameter* find(std::string_view name) const noexcept;

  std::size_t size() const noexcept { return items_.size(); }
  Parameter& operator[](std::size_t i) { return *items_[i]; }
  const Parameter& operator[](std::size_t i) const { return *items_[i]; }

  std::vector<Parameter*> trainable();
  std::vector<const Parameter*> trainable() const;
  std::vector<std::string> groups() const;

  void zero_grad();
  std::size_t trainable_element_count() const;

 private:
  std::vector<std::unique_ptr<Parameter>> items_;
};

}  // namespace orgpose::nn
