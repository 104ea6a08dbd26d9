#pragma once

#include <filesystem>

#include "recseg/net/network.hpp"

namespace recseg::net {

struct CheckpointInfo {
  NetworkConfig config;
  int epoch = 0;
  int round = 0;
};

/// Text header (config, epoch, round, tensor table) terminated by a line
/// `end`, followed by the raw little-endian tensor values in table order.
template <typename T>
void write_checkpoint(const NetworkParameters<T>& params, int epoch, int round, const std::filesystem::path& path);

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Throws FormatError if the stored dtype does not match T.
template <typename T>
NetworkParameters<T> read_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

}  // namespace recseg::net
