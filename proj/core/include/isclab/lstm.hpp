#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "isclab/profile.hpp"

namespace isclab {

struct SequenceSample {
  std::vector<std::uint32_t> tokens;  // profiled-packet indices, each < vocab
  bool legal = true;
};

// Parameters of the legality classifier: a token embedding, one LSTM layer
// and a sigmoid readout of the final hidden state. Gate order is
// input/forget/candidate/output, rows concatenated.
struct RecurrentParams {
  std::uint32_t vocab = 0;      // T, profiled packets per page
  std::uint32_t embed_dim = 0;  // d
  std::uint32_t hidden = 0;     // h

  std::vector<double> embedding;  // vocab x d, row-major
  std::vector<double> w_gates;    // 4h x d
  std::vector<double> u_gates;    // 4h x h
  std::vector<double> b_gates;    // 4h
  std::vector<double> readout_w;  // h
  double readout_b = 0.0;

  static RecurrentParams zeros(std::uint32_t vocab, std::uint32_t embed_dim,
                               std::uint32_t hidden);
  static RecurrentParams seeded(std::uint32_t vocab, std::uint32_t embed_dim,
                                std::uint32_t hidden, std::uint64_t seed);

  std::size_t parameter_count() const;
  double get_flat(std::size_t index) const;   // flat view across all tensors
  void set_flat(std::size_t index, double v);
  void axpy(double scale, const RecurrentParams& direction);  // this += scale*direction
};

// Legality probability of a token sequence, strictly inside (0, 1).
// Throws ContractError on an empty sequence or an out-of-range token.
double forward(const RecurrentParams& params, std::span<const std::uint32_t> tokens);

struct LossGrad {
  double loss = 0.0;        // mean binary cross-entropy over the batch
  RecurrentParams grad;     // same shapes as the parameters
};

LossGrad loss_and_grad(const RecurrentParams& params, std::span<const SequenceSample> batch);

struct TrainConfig {
  double learning_rate = 0.25;
  std::uint32_t epochs = 500;
  std::uint64_t seed = 1;
  double shuffle_ratio = 0.5;    // negatives: shuffled exemplars, per positive
  double crosspage_ratio = 0.5;  // negatives: other pages' exemplars, per positive
  std::uint32_t embed_dim = 8;
  std::uint32_t hidden = 16;
  bool early_stop = true;        // stop once the set is fit
  double early_stop_loss = 0.10;

  void validate() const;
};

struct TrainResult {
  RecurrentParams params;
  bool converged = false;       // training accuracy reached 0.95
  std::uint32_t epochs_run = 0;
  double final_loss = 0.0;
  double train_accuracy = 0.0;
};

// Trains one page's classifier: positives are the profile's exemplar
// sequences, negatives are synthesized as shuffled exemplars plus sequences
// borrowed from other pages' profiles (token indices folded into range).
// Deterministic in (profile, config, other_pages).
TrainResult train(const PageProfile& profile, const TrainConfig& config,
                  std::span<const PageProfile> other_pages = {});

inline constexpr const char* kParamsFormat = "ISCNET 1";

void write_params(const RecurrentParams& params, std::uint32_t page_id, std::ostream& out);
std::pair<std::uint32_t, RecurrentParams> read_params(std::istream& in);

}  // namespace isclab
