// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sentinel {

// One camera frame as shipped from a node to the gateway. Pixels are 8-bit,
// row-major, interleaved when channels == 3.
struct Frame {
  std::string node_id;
  std::uint64_t sequence = 0;
  std::int64_t timestamp_ms = 0;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint8_t channels = 1;
  std::vector<std::uint8_t> pixels;

  // Throws ContractViolation when channels is not 1 or 3 or the buffer length
  // does not equal width * height * channels.
  void validate() const;

  bool operator==(const Frame&) const = default;
};

}  // namespace sentinel
