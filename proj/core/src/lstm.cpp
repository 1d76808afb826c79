#include "isclab/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "isclab/errors.hpp"
#include "isclab/rng.hpp"

namespace isclab {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Per-sample per-step activations kept for backpropagation through time.
struct StepState {
  std::vector<double> i, f, g, o;  // gate outputs, each of size h
  std::vector<double> c, h;        // cell and hidden state after the step
};

struct ForwardPass {
  std::vector<StepState> steps;
  double probability = 0.5;
  double logit = 0.0;
};

ForwardPass run_forward(const RecurrentParams& p, std::span<const std::uint32_t> tokens) {
  if (tokens.empty()) throw ContractError("sequence must have length >= 1");
  const std::uint32_t h = p.hidden;
  const std::uint32_t d = p.embed_dim;

  ForwardPass pass;
  pass.steps.reserve(tokens.size());
  std::vector<double> h_prev(h, 0.0), c_prev(h, 0.0), z(4 * h);

  for (std::uint32_t tok : tokens) {
    if (tok >= p.vocab) throw ContractError("token out of range for vocabulary");
    const double* x = p.embedding.data() + static_cast<std::size_t>(tok) * d;

    for (std::uint32_t r = 0; r < 4 * h; ++r) {
      double acc = p.b_gates[r];
      const double* wrow = p.w_gates.data() + static_cast<std::size_t>(r) * d;
      for (std::uint32_t k = 0; k < d; ++k) acc += wrow[k] * x[k];
      const double* urow = p.u_gates.data() + static_cast<std::size_t>(r) * h;
      for (std::uint32_t k = 0; k < h; ++k) acc += urow[k] * h_prev[k];
      z[r] = acc;
    }

    StepState s;
    s.i.resize(h);
    s.f.resize(h);
    s.g.resize(h);
    s.o.resize(h);
    s.c.resize(h);
    s.h.resize(h);
    for (std::uint32_t k = 0; k < h; ++k) {
      s.i[k] = sigmoid(z[k]);
      s.f[k] = sigmoid(z[h + k]);
      s.g[k] = std::tanh(z[2 * h + k]);
      s.o[k] = sigmoid(z[3 * h + k]);
      s.c[k] = s.f[k] * c_prev[k] + s.i[k] * s.g[k];
      s.h[k] = s.o[k] * std::tanh(s.c[k]);
    }
    h_prev = s.h;
    c_prev = s.c;
    pass.steps.push_back(std::move(s));
  }

  double logit = p.readout_b;
  for (std::uint32_t k = 0; k < h; ++k) logit += p.readout_w[k] * h_prev[k];
  pass.logit = logit;
  pass.probability = sigmoid(logit);
  return pass;
}

}  // namespace

RecurrentParams RecurrentParams::zeros(std::uint32_t vocab, std::uint32_t embed_dim,
                                       std::uint32_t hidden) {
  RecurrentParams p;
  p.vocab = vocab;
  p.embed_dim = embed_dim;
  p.hidden = hidden;
  p.embedding.assign(static_cast<std::size_t>(vocab) * embed_dim, 0.0);
  p.w_gates.assign(static_cast<std::size_t>(4) * hidden * embed_dim, 0.0);
  p.u_gates.assign(static_cast<std::size_t>(4) * hidden * hidden, 0.0);
  p.b_gates.assign(static_cast<std::size_t>(4) * hidden, 0.0);
  p.readout_w.assign(hidden, 0.0);
  p.readout_b = 0.0;
  return p;
}

RecurrentParams RecurrentParams::seeded(std::uint32_t vocab, std::uint32_t embed_dim,
                                        std::uint32_t hidden, std::uint64_t seed) {
  RecurrentParams p = zeros(vocab, embed_dim, hidden);
  SplitMix64 rng(derive_seed(seed, "lstm-init"));
  auto fill = [&rng](std::vector<double>& v, double scale) {
    for (double& x : v) x = rng.real(-scale, scale);
  };
  fill(p.embedding, 0.5);
  fill(p.w_gates, std::sqrt(6.0 / (embed_dim + 4.0 * hidden)));
  fill(p.u_gates, std::sqrt(6.0 / (hidden + 4.0 * hidden)));
  fill(p.readout_w, std::sqrt(6.0 / (hidden + 1.0)));
  // Biases start at zero; the forget gate gets a small positive shift so
  // early training does not wash the cell state out.
  for (std::uint32_t k = 0; k < hidden; ++k) p.b_gates[hidden + k] = 1.0;
  return p;
}

std::size_t RecurrentParams::parameter_count() const {
  return embedding.size() + w_gates.size() + u_gates.size() + b_gates.size() +
         readout_w.size() + 1;
}

double RecurrentParams::get_flat(std::size_t index) const {
  for (const std::vector<double>* v : {&embedding, &w_gates, &u_gates, &b_gates, &readout_w}) {
    if (index < v->size()) return (*v)[index];
    index -= v->size();
  }
  if (index == 0) return readout_b;
  throw ContractError("flat parameter index out of range");
}

void RecurrentParams::set_flat(std::size_t index, double value) {
  for (std::vector<double>* v : {&embedding, &w_gates, &u_gates, &b_gates, &readout_w}) {
    if (index < v->size()) {
      (*v)[index] = value;
      return;
    }
    index -= v->size();
  }
  if (index == 0) {
    readout_b = value;
    return;
  }
  throw ContractError("flat parameter index out of range");
}

void RecurrentParams::axpy(double scale, const RecurrentParams& direction) {
  auto add = [scale](std::vector<double>& dst, const std::vector<double>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
  };
  add(embedding, direction.embedding);
  add(w_gates, direction.w_gates);
  add(u_gates, direction.u_gates);
  add(b_gates, direction.b_gates);
  add(readout_w, direction.readout_w);
  readout_b += scale * direction.readout_b;
}

double forward(const RecurrentParams& params, std::span<const std::uint32_t> tokens) {
  return run_forward(params, tokens).probability;
}

LossGrad loss_and_grad(const RecurrentParams& p, std::span<const SequenceSample> batch) {
  if (batch.empty()) throw ContractError("loss_and_grad needs a non-empty batch");
  const std::uint32_t h = p.hidden;
  const std::uint32_t d = p.embed_dim;
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  LossGrad out;
  out.grad = RecurrentParams::zeros(p.vocab, d, h);

  std::vector<double> dh(h), dc(h), dz(4 * h), dh_prev(h), dc_prev(h);

  for (const SequenceSample& sample : batch) {
    const ForwardPass pass = run_forward(p, sample.tokens);
    const double y = sample.legal ? 1.0 : 0.0;
    const double prob = std::clamp(pass.probability, 1e-12, 1.0 - 1e-12);
    out.loss += -(y * std::log(prob) + (1.0 - y) * std::log(1.0 - prob)) * inv_n;

    const double dlogit = (pass.probability - y) * inv_n;
    const std::vector<double>& h_last = pass.steps.back().h;
    for (std::uint32_t k = 0; k < h; ++k) {
      out.grad.readout_w[k] += dlogit * h_last[k];
      dh[k] = dlogit * p.readout_w[k];
      dc[k] = 0.0;
    }
    out.grad.readout_b += dlogit;

    for (std::size_t step = sample.tokens.size(); step-- > 0;) {
      const StepState& s = pass.steps[step];
      const std::vector<double>* c_prev = step > 0 ? &pass.steps[step - 1].c : nullptr;
      const std::vector<double>* h_prev = step > 0 ? &pass.steps[step - 1].h : nullptr;

      for (std::uint32_t k = 0; k < h; ++k) {
        const double tc = std::tanh(s.c[k]);
        const double do_ = dh[k] * tc;
        dc[k] += dh[k] * s.o[k] * (1.0 - tc * tc);

        const double di = dc[k] * s.g[k];
        const double dg = dc[k] * s.i[k];
        const double df = dc[k] * (c_prev ? (*c_prev)[k] : 0.0);

        dz[k] = di * s.i[k] * (1.0 - s.i[k]);
        dz[h + k] = df * s.f[k] * (1.0 - s.f[k]);
        dz[2 * h + k] = dg * (1.0 - s.g[k] * s.g[k]);
        dz[3 * h + k] = do_ * s.o[k] * (1.0 - s.o[k]);

        dc_prev[k] = dc[k] * s.f[k];
      }

      const std::uint32_t tok = sample.tokens[step];
      const double* x = p.embedding.data() + static_cast<std::size_t>(tok) * d;
      double* dx = out.grad.embedding.data() + static_cast<std::size_t>(tok) * d;
      std::fill(dh_prev.begin(), dh_prev.end(), 0.0);

      for (std::uint32_t r = 0; r < 4 * h; ++r) {
        const double dzr = dz[r];
        out.grad.b_gates[r] += dzr;
        double* dwrow = out.grad.w_gates.data() + static_cast<std::size_t>(r) * d;
        const double* wrow = p.w_gates.data() + static_cast<std::size_t>(r) * d;
        for (std::uint32_t k = 0; k < d; ++k) {
          dwrow[k] += dzr * x[k];
          dx[k] += dzr * wrow[k];
        }
        if (h_prev) {
          double* durow = out.grad.u_gates.data() + static_cast<std::size_t>(r) * h;
          const double* urow = p.u_gates.data() + static_cast<std::size_t>(r) * h;
          for (std::uint32_t k = 0; k < h; ++k) {
            durow[k] += dzr * (*h_prev)[k];
            dh_prev[k] += dzr * urow[k];
          }
        }
      }

      dh = dh_prev;
      dc = dc_prev;
    }
  }
  return out;
}

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
  if (shuffle_ratio < 0.0 || crosspage_ratio < 0.0)
    throw ConfigError("negative sampling ratios must be >= 0");
  if (embed_dim < 1 || hidden < 1) throw ConfigError("model dimensions must be >= 1");
}

namespace {

std::vector<SequenceSample> build_training_set(const PageProfile& profile,
                                               const TrainConfig& config,
                                               std::span<const PageProfile> other_pages,
                                               SplitMix64& rng) {
  const std::uint32_t vocab = static_cast<std::uint32_t>(profile.packets.size());
  std::vector<SequenceSample> samples;
  for (const auto& seq : profile.exemplar_sequences)
    if (!seq.empty()) samples.push_back(SequenceSample{seq, true});
  if (samples.empty()) throw ContractError("profile has no usable exemplar sequences");
  const std::size_t k = samples.size();

  // Candidate sequences at recognition time carry one instance per slot, so
  // the classifier must also accept the first-occurrence projection of each
  // exemplar.
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<std::uint32_t> dedup;
    std::vector<bool> seen(vocab, false);
    for (std::uint32_t tok : samples[i].tokens) {
      if (tok < vocab && !seen[tok]) {
        seen[tok] = true;
        dedup.push_back(tok);
      }
    }
    if (dedup.size() != samples[i].tokens.size())
      samples.push_back(SequenceSample{std::move(dedup), true});
  }

  auto differs_from_positive = [&](const std::vector<std::uint32_t>& seq) {
    for (const SequenceSample& s : samples)
      if (s.legal && s.tokens == seq) return false;
    return true;
  };

  std::vector<const PageProfile*> others;
  for (const PageProfile& other : other_pages)
    if (other.page_id != profile.page_id && !other.exemplar_sequences.empty())
      others.push_back(&other);

  std::size_t want_shuffle = static_cast<std::size_t>(
      std::llround(config.shuffle_ratio * static_cast<double>(k)));
  std::size_t want_cross = static_cast<std::size_t>(
      std::llround(config.crosspage_ratio * static_cast<double>(k)));
  if (others.empty()) {
    want_shuffle += want_cross;  // no other pages to borrow from
    want_cross = 0;
  }

  for (std::size_t n = 0; n < want_shuffle; ++n) {
    std::vector<std::uint32_t> seq = samples[rng.below(k)].tokens;
    bool ok = false;
    for (int attempt = 0; attempt < 16 && !ok; ++attempt) {
      rng.shuffle(seq);
      ok = differs_from_positive(seq);
    }
    if (ok) samples.push_back(SequenceSample{std::move(seq), false});
  }

  for (std::size_t n = 0; n < want_cross; ++n) {
    const PageProfile& other = *others[rng.below(others.size())];
    const auto& src = other.exemplar_sequences[rng.below(other.exemplar_sequences.size())];
    if (src.empty()) continue;
    std::vector<std::uint32_t> seq;
    seq.reserve(src.size());
    for (std::uint32_t tok : src) seq.push_back(tok % vocab);  // fold into our vocabulary
    if (differs_from_positive(seq)) samples.push_back(SequenceSample{std::move(seq), false});
  }
  return samples;
}

double accuracy_on(const RecurrentParams& params, std::span<const SequenceSample> samples) {
  std::size_t correct = 0;
  for (const SequenceSample& s : samples) {
    const bool predicted = forward(params, s.tokens) >= 0.5;
    if (predicted == s.legal) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace

TrainResult train(const PageProfile& profile, const TrainConfig& config,
                  std::span<const PageProfile> other_pages) {
  config.validate();
  if (profile.exemplar_sequences.empty())
    throw ContractError("training needs at least one exemplar sequence");

  SplitMix64 rng(derive_seed(config.seed, "train", profile.page_id));
  const std::vector<SequenceSample> samples =
      build_training_set(profile, config, other_pages, rng);

  TrainResult result;
  result.params = RecurrentParams::seeded(static_cast<std::uint32_t>(profile.packets.size()),
                                          config.embed_dim, config.hidden,
                                          derive_seed(config.seed, "init", profile.page_id));

  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    LossGrad lg = loss_and_grad(result.params, samples);
    result.params.axpy(-config.learning_rate, lg.grad);
    result.final_loss = lg.loss;
    ++result.epochs_run;
    if (config.early_stop) {
      result.train_accuracy = accuracy_on(result.params, samples);
      if (result.train_accuracy >= 1.0 && lg.loss <= config.early_stop_loss) break;
    }
  }
  result.train_accuracy = accuracy_on(result.params, samples);
  result.converged = result.train_accuracy >= 0.95;
  return result;
}

void write_params(const RecurrentParams& params, std::uint32_t page_id, std::ostream& out) {
  out << kParamsFormat << '\n';
  out << "page " << page_id << '\n';
  out << "dims " << params.vocab << ' ' << params.embed_dim << ' ' << params.hidden << '\n';
  char buf[32];
  auto row = [&](const char* name, std::span<const double> values) {
    out << name;
    for (double v : values) {
      std::snprintf(buf, sizeof buf, " %.17g", v);
      out << buf;
    }
    out << '\n';
  };
  row("embedding", params.embedding);
  row("w_gates", params.w_gates);
  row("u_gates", params.u_gates);
  row("b_gates", params.b_gates);
  row("readout_w", params.readout_w);
  std::snprintf(buf, sizeof buf, " %.17g", params.readout_b);
  out << "readout_b" << buf << '\n';
  if (!out) throw IoError("params write failed");
}

std::pair<std::uint32_t, RecurrentParams> read_params(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kParamsFormat)
    throw ParseError("bad params header (expected '" + std::string(kParamsFormat) + "')", 1, 1);

  std::uint32_t page_id = 0;
  std::uint32_t vocab = 0, d = 0, h = 0;
  {
    if (!std::getline(in, line)) throw ParseError("missing page line", 2, 1);
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word >> page_id) || word != "page") throw ParseError("bad page line", 2, 1);
  }
  {
    if (!std::getline(in, line)) throw ParseError("missing dims line", 3, 1);
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word >> vocab >> d >> h) || word != "dims")
      throw ParseError("bad dims line", 3, 1);
  }

  RecurrentParams params = RecurrentParams::zeros(vocab, d, h);
  std::size_t line_no = 3;
  auto read_row = [&](const char* name, std::vector<double>& values) {
    if (!std::getline(in, line)) throw ParseError("missing section", ++line_no, 1);
    ++line_no;
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word) || word != name)
      throw ParseError(std::string("expected section '") + name + "'", line_no, 1);
    for (double& v : values)
      if (!(ss >> v)) throw ParseError(std::string("short row in '") + name + "'", line_no, 1);
  };
  read_row("embedding", params.embedding);
  read_row("w_gates", params.w_gates);
  read_row("u_gates", params.u_gates);
  read_row("b_gates", params.b_gates);
  read_row("readout_w", params.readout_w);
  {
    if (!std::getline(in, line)) throw ParseError("missing readout_b", ++line_no, 1);
    ++line_no;
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word >> params.readout_b) || word != "readout_b")
      throw ParseError("bad readout_b line", line_no, 1);
  }
  return {page_id, params};
}

}  // namespace isclab
