#include "seltune/strategy.hpp"

namespace seltune {

ParamCounts count_parameters(const ModelConfig& cfg) {
  cfg.validate();
  const uint64_t d = static_cast<uint64_t>(cfg.d_model);
  const uint64_t dff = static_cast<uint64_t>(cfg.d_ff);
  const uint64_t c = static_cast<uint64_t>(cfg.n_classes);

  ParamCounts out;
  out.token_embedding = static_cast<uint64_t>(cfg.vocab_size) * d;
  out.position_embedding = static_cast<uint64_t>(cfg.max_positions) * d;
  // attention: 3d^2 + 3d (qkv) + d^2 + d (proj); mlp: d*dff + dff + dff*d + d;
  // two LayerNorms: 4d
  out.per_block = (3 * d * d + 3 * d) + (d * d + d) + (d * dff + dff) +
                  (dff * d + d) + 4 * d;
  out.final_ln = 2 * d;
  out.head = d * c + c;
  out.backbone_total = out.token_embedding + out.position_embedding +
                       static_cast<uint64_t>(cfg.n_layers) * out.per_block +
                       out.final_ln;
  out.store_total = out.backbone_total + out.head;
  return out;
}

StepCost step_cost_estimate(int64_t seq_len, const ModelConfig& cfg,
                            Strategy strategy) {
  if (seq_len < 1)
    throw std::invalid_argument("step_cost_estimate: seq_len must be >= 1");
  cfg.validate();
  const double t = static_cast<double>(seq_len);
  const double d = static_cast<double>(cfg.d_model);
  const double dff = static_cast<double>(cfg.d_ff);
  const double l = static_cast<double>(cfg.n_layers);
  const double c = static_cast<double>(cfg.n_classes);

  // per block: qkv + output projections 8td^2, scores + weighted values 4t^2d,
  // feed-forward 4td*dff
  const double block_quad = 4.0 * t * t * d;
  const double block_linear = 8.0 * t * d * d;
  const double block_mlp = 4.0 * t * d * dff;
  const double block = block_quad + block_linear + block_mlp;
  const double head = 2.0 * d * c;
  const double embed = t * d;

  StepCost cost;
  cost.forward_attention_flops = l * block_quad;
  cost.forward_mlp_flops = l * block_mlp;
  cost.forward_flops = embed + l * block + head;

  double blocks_on_path = 0.0;
  switch (strategy) {
    case Strategy::Full: blocks_on_path = l; break;
    case Strategy::Selective: blocks_on_path = 1.0; break;
    case Strategy::HeadOnly: blocks_on_path = 0.0; break;
  }
  cost.backward_flops = 2.0 * blocks_on_path * block + 2.0 * head;
  if (strategy == Strategy::Full) cost.backward_flops += embed;
  return cost;
}

}  // namespace seltune
