#pragma once

#include <vector>

#include "softmark/attacks.hpp"
#include "softmark/modelzoo.hpp"
#include "softmark/pipelines.hpp"
#include "softmark/signal.hpp"

namespace softmark::desk {

// synth5 recipes sized to run in seconds on one core.
ClassifierSpec mlp_spec(std::uint64_t seed);
TrainConfig pretrain_config();
TrainConfig usp_config();
TrainConfig csp_config();
AttackConfig finetune_config(double lr);
AttackConfig prune_config();
AttackConfig prune_retrain_config();
AttackConfig distill_config(const ClassifierSpec& student);

// Three full-support signals, near-balanced in sign, pairwise Hamming distance >= 3.
// Signal 0 is the default CSP key.
std::vector<WatermarkSignal> customization_signals();

// `count` signals drawn from consecutive seeds, keeping only those at Hamming
// distance >= min_distance from every signal already kept.
std::vector<WatermarkSignal> distinct_signals(std::size_t count, std::size_t length, std::int64_t seed,
                                              std::size_t min_distance, double zero_fraction, double gamma);

}  // namespace softmark::desk
