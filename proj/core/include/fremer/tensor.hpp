#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace fremer {

// Named parameter tensor. Complex tensors hold planar storage (all real
// parts, then all imaginary parts); the flat `data` view is what the
// optimizer, finite differencing, and checkpoint IO iterate over. The
// on-disk checkpoint format interleaves re/im; conversion happens at the IO
// boundary.
struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  bool is_complex = false;
  std::vector<double> data;

  static Tensor real(std::string name, std::vector<std::size_t> shape);
  static Tensor complex(std::string name, std::vector<std::size_t> shape);

  std::size_t numel() const {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }

  double* re() { return data.data(); }
  const double* re() const { return data.data(); }
  // Valid only for complex tensors.
  double* im() { return data.data() + numel(); }
  const double* im() const { return data.data() + numel(); }

  void zero() { data.assign(data.size(), 0.0); }
};

}  // namespace fremer
