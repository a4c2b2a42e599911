#pragma once

// Bit-exact checkpoint container: magic `GPT2CKPT`, u32 LE version = 1,
// u64 LE metadata length, UTF-8 JSON metadata (config + tensor index with
// name/shape/offset/dtype), then raw little-endian f32 data per tensor in
// index order.

#include <string>

#include "seltune/model.hpp"

namespace seltune {

inline constexpr char kCheckpointMagic[8] = {'G', 'P', 'T', '2',
                                             'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCheckpointVersion = 1;

// Deterministic byte output for identical inputs. The store must contain
// exactly the tensors expected_shapes(cfg) names.
void save_checkpoint(const ParameterStore& params, const ModelConfig& cfg,
                     const std::string& path);

// Validates magic/version, presence and shape of every expected tensor
// (errors name the offending tensor). Loaded tensors are all trainable until
// a strategy is applied.
ParameterStore load_checkpoint(const std::string& path,
                               const ModelConfig& expected);

// Reads just the embedded ModelConfig, for commands that derive the
// architecture from the file itself.
ModelConfig read_checkpoint_config(const std::string& path);

}  // namespace seltune
