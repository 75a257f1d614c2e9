#pragma once

#include <string>
#include <vector>

#include "flowpose/types.hpp"

namespace flowpose::ad {

// Named, ordered weight storage. Registration order is deterministic and is
// the serialization order, which keeps checkpoints byte-stable.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    std::string group;  // "gen" | "disc"
    Mat value;
    Mat m, v;  // Adam first/second moments
  };

  int add(const std::string& name, const std::string& group, Mat init) {
    FLOWPOSE_REQUIRE(find(name) < 0, "duplicate parameter name: " + name);
    Entry e;
    e.name = name;
    e.group = group;
    e.m = Mat::Zero(init.rows(), init.cols());
    e.v = Mat::Zero(init.rows(), init.cols());
    e.value = std::move(init);
    entries_.push_back(std::move(e));
    return static_cast<int>(entries_.size()) - 1;
  }

  int find(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name == name) return static_cast<int>(i);
    return -1;
  }

  Entry& entry(int pid) { return entries_.at(static_cast<std::size_t>(pid)); }
  const Entry& entry(int pid) const { return entries_.at(static_cast<std::size_t>(pid)); }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
    return n;
  }

 private:
  std::vector<Entry> entries_;
};

}  // namespace flowpose::ad
