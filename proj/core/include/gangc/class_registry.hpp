#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gangc/address.hpp"
#include "gangc/config.hpp"

namespace gangc {

using ClassId = std::uint32_t;

// Class id 0 is reserved for heap filler: variable-sized dead padding that
// keeps carved extents walkable. Fillers are never reachable.
inline constexpr ClassId kFillerClassId = 0;

struct ClassDescriptor {
  ClassId class_id = 0;
  std::string name;
  std::uint32_t ref_field_count = 0;
  std::uint32_t scalar_bytes = 0;
  bool is_bda_class = false;
  std::optional<std::uint32_t> target_bda_space;

  // h + ref_field_count * f + scalar_bytes, rounded up to alignment.
  std::size_t instance_bytes = 0;

  std::size_t ref_field_offset(std::uint32_t index) const {
    return kHeaderBytes + std::size_t{index} * kRefBytes;
  }
  std::size_t scalar_offset() const {
    return kHeaderBytes + std::size_t{ref_field_count} * kRefBytes;
  }
};

class RegistryError : public std::runtime_error {
 public:
  explicit RegistryError(const std::string& what) : std::runtime_error(what) {}
};

constexpr std::size_t object_bytes_for(std::uint32_t ref_fields, std::uint32_t scalar_bytes) {
  return align_up(kHeaderBytes + std::size_t{ref_fields} * kRefBytes + scalar_bytes, kAlignment);
}

// Registry of managed types. Registration happens before the first
// collection; the registry freezes on first allocation.
class ClassRegistry {
 public:
  explicit ClassRegistry(const std::vector<std::string>& bda_classes) {
    for (std::uint32_t i = 0; i < bda_classes.size(); ++i) bda_index_.emplace(bda_classes[i], i);
    ClassDescriptor filler;
    filler.class_id = kFillerClassId;
    filler.name = "(filler)";
    filler.instance_bytes = 0;  // actual size lives in the filler header
    descriptors_.push_back(std::move(filler));
  }

  const ClassDescriptor& register_class(std::string_view name, std::uint32_t ref_field_count,
                                        std::uint32_t scalar_bytes) {
    if (frozen_) throw RegistryError("class registry is frozen");
    if (name.empty()) throw RegistryError("class name must be non-empty");
    if (by_name_.contains(std::string(name)))
      throw RegistryError("duplicate class name: " + std::string(name));
    ClassDescriptor d;
    d.class_id = static_cast<ClassId>(descriptors_.size());
    d.name = std::string(name);
    d.ref_field_count = ref_field_count;
    d.scalar_bytes = scalar_bytes;
    d.instance_bytes = object_bytes_for(ref_field_count, scalar_bytes);
    if (auto it = bda_index_.find(d.name); it != bda_index_.end()) {
      d.is_bda_class = true;
      d.target_bda_space = it->second;
    }
    by_name_.emplace(d.name, d.class_id);
    descriptors_.push_back(std::move(d));
    return descriptors_.back();
  }

  const ClassDescriptor& operator[](ClassId id) const { return descriptors_.at(id); }

  const ClassDescriptor* find(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    return it == by_name_.end() ? nullptr : &descriptors_[it->second];
  }

  bool valid(ClassId id) const { return id < descriptors_.size(); }
  std::size_t size() const { return descriptors_.size(); }
  std::uint32_t bda_space_count() const { return static_cast<std::uint32_t>(bda_index_.size()); }

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

 private:
  std::vector<ClassDescriptor> descriptors_;
  std::unordered_map<std::string, ClassId> by_name_;
  std::unordered_map<std::string, std::uint32_t> bda_index_;
  bool frozen_ = false;
};

}  // namespace gangc
