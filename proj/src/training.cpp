#include "mmcl/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mmcl/binio.hpp"
#include "mmcl/config.hpp"
#include "mmcl/errors.hpp"
#include "mmcl/rng.hpp"

namespace mmcl {

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::mmcl_pgd: return "mmcl_pgd";
    case LossKind::mmcl_inv: return "mmcl_inv";
    case LossKind::nce: return "nce";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "mmcl_pgd") return LossKind::mmcl_pgd;
  if (name == "mmcl_inv") return LossKind::mmcl_inv;
  if (name == "nce") return LossKind::nce;
  throw InvalidArgument("unknown loss '" + std::string(name) + "'");
}

namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566ULL;
constexpr std::uint64_t kAugmentStream = 0x61756700ULL;
constexpr std::uint64_t kSolverStream = 0x736F6C76ULL;
constexpr std::uint64_t kInitStream = 0x696E6974ULL;

bool is_schedulable(const std::string& field) {
  return field == "C" || field == "sigma_sq" || field == "gamma" || field == "bias";
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("batch_size", "batch_size must be >= 2");
  if (epochs < 1) throw ConfigError("epochs", "epochs must be >= 1");
  if (!(lr >= 0.0)) throw ConfigError("lr", "lr must be >= 0");
  if (!(C > 0.0)) throw ConfigError("C", "C must be positive");
  if (!(beta >= 0.0)) throw ConfigError("beta", "beta must be >= 0");
  if (!(temperature > 0.0)) throw ConfigError("temperature", "temperature must be positive");
  if (backbone.empty() && head.empty()) throw ConfigError("encoder.backbone", "encoder needs at least one layer");
  if (!(eval.split > 0.0 && eval.split < 1.0)) throw ConfigError("eval.split", "eval.split must be in (0, 1)");
  if (eval.k < 1) throw ConfigError("eval.k", "eval.k must be >= 1");
  try {
    kernel.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("kernel", e.what());
  }
  try {
    solver.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("solver", e.what());
  }
  try {
    aug.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError("aug", e.what());
  }
  for (std::size_t i = 0; i < schedules.size(); ++i) {
    const auto& s = schedules[i];
    if (!is_schedulable(s.field)) throw ConfigError("schedule", "cannot schedule field '" + s.field + "'");
    for (std::size_t j = 0; j < i; ++j) {
      if (schedules[j].field == s.field && schedules[j].epoch >= s.epoch) {
        throw ConfigError("schedule", "schedule epochs for '" + s.field + "' must be strictly increasing");
      }
    }
  }
}

Phase apply_schedules(const TrainConfig& cfg, std::size_t epoch) {
  Phase p{cfg.C, cfg.kernel};
  for (const auto& s : cfg.schedules) {
    if (s.epoch > epoch) continue;
    double* field = s.field == "C"          ? &p.C
                    : s.field == "sigma_sq" ? &p.kernel.sigma_sq
                    : s.field == "gamma"    ? &p.kernel.gamma
                    : s.field == "bias"     ? &p.kernel.bias
                                            : nullptr;
    if (field == nullptr) throw InvalidArgument("cannot schedule field '" + s.field + "'");
    *field = s.multiply ? *field * s.value : s.value;
  }
  return p;
}

Dataset make_dataset(const DataConfig& cfg) {
  if (cfg.source == "blobs") return make_blobs(cfg.num_classes, cfg.per_class, cfg.dim, cfg.separation, cfg.seed);
  if (cfg.source == "moons") return make_moons(cfg.per_class, cfg.noise, cfg.dim, cfg.seed);
  if (cfg.source == "file") {
    if (cfg.path.empty()) throw ConfigError("data.path", "data.source = file requires data.path");
    return load_dataset(cfg.path);
  }
  throw ConfigError("data.source", "unknown data source '" + cfg.source + "'");
}

PreparedData prepare_data(const TrainConfig& cfg) {
  Dataset ds = make_dataset(cfg.data);
  ds.validate();
  PreparedData out;
  if (ds.labeled()) {
    auto [train, test] = split_dataset(ds, cfg.eval.split, cfg.eval.seed);
    out.train = std::move(train);
    out.test = std::move(test);
  } else {
    out.train = std::move(ds);
  }
  return out;
}

TrainState init_train_state(const TrainConfig& cfg, Index in_dim) {
  TrainState s;
  EncoderShape shape;
  shape.in_dim = in_dim;
  shape.backbone = cfg.backbone;
  shape.head = cfg.head;
  s.params = init_encoder(shape, stream_id({cfg.seed, kInitStream}));
  s.adam = make_adam(s.params, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
  return s;
}

std::vector<std::vector<Index>> epoch_batches(const TrainConfig& cfg, Index dataset_size, std::size_t epoch) {
  const auto n = static_cast<Index>(cfg.batch_size);
  if (dataset_size < n) {
    throw InvalidArgument("dataset has " + std::to_string(dataset_size) + " samples, fewer than batch_size " +
                          std::to_string(n));
  }
  CounterRng rng(cfg.seed, stream_id({kShuffleStream, epoch}));
  const auto order = shuffled_indices(dataset_size, rng);
  std::vector<std::vector<Index>> batches;
  for (Index start = 0; start + n <= dataset_size; start += n) {
    batches.emplace_back(order.begin() + start, order.begin() + start + n);
  }
  return batches;
}

BatchViews make_views(const TrainConfig& cfg, const Dataset& ds, const std::vector<Index>& rows, std::size_t epoch,
                      std::size_t batch) {
  BatchViews v;
  const auto n = static_cast<Index>(rows.size());
  v.view1.resize(ds.dim(), n);
  v.view2.resize(ds.dim(), n);
  for (Index k = 0; k < n; ++k) {
    const Vec x = ds.samples.row(rows[static_cast<std::size_t>(k)]).transpose();
    const auto kk = static_cast<std::uint64_t>(k);
    CounterRng t1(cfg.seed, stream_id({kAugmentStream, epoch, batch, kk, 1}));
    CounterRng t2(cfg.seed, stream_id({kAugmentStream, epoch, batch, kk, 2}));
    v.view1.col(k) = augment(cfg.aug, x, t1);
    v.view2.col(k) = augment(cfg.aug, x, t2);
  }
  return v;
}

BatchLossOptions batch_options(const TrainConfig& cfg, const Phase& phase, std::size_t epoch, std::size_t batch) {
  BatchLossOptions o;
  o.kernel = phase.kernel;
  o.C = phase.C;
  o.beta = cfg.beta;
  o.solver = cfg.loss == LossKind::mmcl_pgd ? SolverKind::pgd : SolverKind::inv;
  o.solver_cfg = cfg.solver;
  o.solver_cfg.seed = stream_id({cfg.seed, kSolverStream, epoch, batch});
  o.fn_correction = cfg.fn_correction;
  o.reduction = cfg.reduction;
  o.keep_anchor_grads = false;
  return o;
}

namespace {

std::string divergence_report(const TrainConfig& cfg, const Phase& phase, std::size_t epoch, std::size_t batch,
                              const Mat& view1, const Mat& view2, const BatchLossResult* result) {
  std::ostringstream out;
  out << "epoch=" << epoch << "\nbatch=" << batch << "\nloss_kind=" << to_string(cfg.loss)
      << "\nC=" << format_double(phase.C) << "\nsigma_sq=" << format_double(phase.kernel.sigma_sq)
      << "\nbeta=" << format_double(cfg.beta) << "\nembeddings_finite=" << (view1.allFinite() && view2.allFinite())
      << '\n';
  if (result != nullptr && !result->anchors.empty()) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    double total = 0.0;
    Index count = 0;
    Index at_bound = 0;
    std::size_t unconverged = 0;
    for (const auto& a : result->anchors) {
      if (a.alpha.size() == 0) continue;
      lo = std::min(lo, a.alpha.minCoeff());
      hi = std::max(hi, a.alpha.maxCoeff());
      total += a.alpha.sum();
      count += a.alpha.size();
      at_bound += (a.solution.alpha.array() >= phase.C).count();
      unconverged += a.solution.converged ? 0 : 1;
    }
    if (count > 0) {
      out << "alpha_min=" << format_double(lo) << "\nalpha_max=" << format_double(hi)
          << "\nalpha_mean=" << format_double(total / static_cast<double>(count)) << "\nalpha_at_C=" << at_bound
          << "\nunconverged_solves=" << unconverged << '\n';
    }
  }
  if (cfg.loss != LossKind::nce && view1.allFinite() && view2.allFinite()) {
    // Conditioning of anchor 0's dual matrix.
    const auto negs = negative_columns(view1.cols(), 0);
    Mat all(view1.rows(), 2 * view1.cols());
    all << view1, view2;
    Mat z_neg(all.rows(), static_cast<Index>(negs.size()));
    for (std::size_t i = 0; i < negs.size(); ++i) z_neg.col(static_cast<Index>(i)) = all.col(negs[i]);
    const SvmInstance inst = build_instance(phase.kernel, all.col(0), z_neg, phase.C, cfg.beta);
    Eigen::SelfAdjointEigenSolver<Mat> eig(inst.delta, Eigen::EigenvaluesOnly);
    const double lmin = eig.eigenvalues().minCoeff();
    const double lmax = eig.eigenvalues().maxCoeff();
    out << "delta_lambda_min=" << format_double(lmin) << "\ndelta_lambda_max=" << format_double(lmax)
        << "\ndelta_condition=" << format_double(lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity())
        << '\n';
  }
  return out.str();
}

}  // namespace

EpochMetrics run_epoch(TrainState& state, const TrainConfig& cfg, const Dataset& train) {
  const std::size_t epoch = state.epoch;
  const Phase phase = apply_schedules(cfg, epoch);
  const auto batches = epoch_batches(cfg, train.size(), epoch);
  if (train.dim() != state.params.in_dim()) throw InvalidArgument("dataset dimension does not match the encoder");
  state.adam.lr = cfg.lr;

  double loss_sum = 0.0;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const BatchViews views = make_views(cfg, train, batches[b], epoch, b);
    const Index n = views.view1.cols();
    Mat x(train.dim(), 2 * n);
    x << views.view1, views.view2;
    const ForwardResult fwd = forward(state.params, x);
    const Mat e1 = fwd.embeddings.leftCols(n);
    const Mat e2 = fwd.embeddings.rightCols(n);

    BatchLossResult res;
    try {
      res = cfg.loss == LossKind::nce
                ? nce_batch_loss(e1, e2, cfg.temperature, cfg.reduction, false)
                : batch_loss(e1, e2, batch_options(cfg, phase, epoch, b));
    } catch (const NumericalSingularity& e) {
      throw NonFiniteLoss(std::string("solver failed: ") + e.what(),
                          divergence_report(cfg, phase, epoch, b, e1, e2, nullptr));
    }
    if (!std::isfinite(res.loss) || !res.d_view1.allFinite() || !res.d_view2.allFinite()) {
      throw NonFiniteLoss("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b),
                          divergence_report(cfg, phase, epoch, b, e1, e2, &res));
    }
    loss_sum += res.loss;

    Mat d_emb(e1.rows(), 2 * n);
    d_emb << res.d_view1, res.d_view2;
    const EncoderGrads grads = backward(state.params, fwd.tape, d_emb);
    adam_step(state.params, grads, state.adam);
  }

  EpochMetrics m;
  state.epoch = epoch + 1;
  m.epoch = state.epoch;
  m.C = phase.C;
  m.sigma_sq = phase.kernel.sigma_sq;
  m.mean_loss = loss_sum / static_cast<double>(batches.size());
  return m;
}

EvalReport evaluate(const EncoderParams& params, const Dataset& train, const Dataset& test, const EvalConfig& cfg,
                    std::ostream* warnings) {
  if (!train.labeled() || !test.labeled()) throw InvalidArgument("evaluation requires labeled data");
  std::vector<Index> train_rows(static_cast<std::size_t>(train.size()));
  std::vector<Index> test_rows(static_cast<std::size_t>(test.size()));
  std::iota(train_rows.begin(), train_rows.end(), Index{0});
  std::iota(test_rows.begin(), test_rows.end(), Index{0});
  const Mat train_emb = embed(params, train.columns(train_rows), cfg.features);
  const Mat test_emb = embed(params, test.columns(test_rows), cfg.features);

  EvalReport r;
  r.k = std::min<int>(cfg.k, static_cast<int>(train.size()));
  r.epochs_probe = cfg.probe_epochs;
  r.knn_accuracy = knn_readout(train_emb, *train.labels, test_emb, *test.labels, cfg.k, warnings);
  r.linear_accuracy =
      linear_probe(train_emb, *train.labels, test_emb, *test.labels, {cfg.probe_epochs, cfg.probe_lr, cfg.seed}).accuracy;
  return r;
}

void train(TrainState& state, const TrainConfig& cfg, const PreparedData& data, const EpochCallback& on_epoch) {
  cfg.validate();
  while (state.epoch < cfg.epochs) {
    EpochMetrics m = run_epoch(state, cfg, data.train);
    if (cfg.eval.every > 0 && data.test && m.epoch % static_cast<std::size_t>(cfg.eval.every) == 0) {
      const EvalReport r = evaluate(state.params, data.train, *data.test, cfg.eval);
      m.knn_accuracy = r.knn_accuracy;
      m.linear_accuracy = r.linear_accuracy;
    }
    state.history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
}

void write_metrics_header(std::ostream& out) { out << "epoch,C,sigma_sq,loss,knn_acc,linear_acc\n"; }

void write_metrics_row(std::ostream& out, const EpochMetrics& m) {
  out << m.epoch << ',' << format_double(m.C) << ',' << format_double(m.sigma_sq) << ',' << format_double(m.mean_loss)
      << ',' << (m.knn_accuracy ? format_double(*m.knn_accuracy) : "") << ','
      << (m.linear_accuracy ? format_double(*m.linear_accuracy) : "") << '\n';
}

void save_checkpoint(const std::string& path, const TrainState& state) {
  binio::write_atomically(path, [&](std::ostream& out) {
    write_encoder(out, state.params);
    binio::write_magic(out, "TRST");
    binio::write_u64(out, state.epoch);
    binio::write_f64(out, state.adam.lr);
    binio::write_f64(out, state.adam.beta1);
    binio::write_f64(out, state.adam.beta2);
    binio::write_f64(out, state.adam.epsilon);
    binio::write_u64(out, state.adam.step);
    for (const auto* buf : {&state.adam.m, &state.adam.v}) {
      for (const auto& l : *buf) {
        binio::write_matrix(out, l.weight);
        binio::write_vector(out, l.bias);
      }
    }
    binio::write_u64(out, state.history.size());
    for (const auto& m : state.history) {
      binio::write_u64(out, m.epoch);
      binio::write_f64(out, m.C);
      binio::write_f64(out, m.sigma_sq);
      binio::write_f64(out, m.mean_loss);
      binio::write_u64(out, (m.knn_accuracy ? 1u : 0u) | (m.linear_accuracy ? 2u : 0u));
      binio::write_f64(out, m.knn_accuracy.value_or(0.0));
      binio::write_f64(out, m.linear_accuracy.value_or(0.0));
    }
  });
}

TrainState load_checkpoint(const std::string& path, double lr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  TrainState s;
  s.params = read_encoder(in);
  s.adam = make_adam(s.params, lr);
  if (!binio::peek_magic(in, "TRST")) return s;
  binio::expect_magic(in, "TRST", "checkpoint state");
  s.epoch = binio::read_u64(in);
  s.adam.lr = binio::read_f64(in);
  s.adam.beta1 = binio::read_f64(in);
  s.adam.beta2 = binio::read_f64(in);
  s.adam.epsilon = binio::read_f64(in);
  s.adam.step = binio::read_u64(in);
  for (auto* buf : {&s.adam.m, &s.adam.v}) {
    for (auto& l : *buf) {
      binio::read_matrix(in, l.weight);
      binio::read_vector(in, l.bias);
    }
  }
  const auto rows = binio::read_u64(in);
  for (std::uint64_t i = 0; i < rows; ++i) {
    EpochMetrics m;
    m.epoch = binio::read_u64(in);
    m.C = binio::read_f64(in);
    m.sigma_sq = binio::read_f64(in);
    m.mean_loss = binio::read_f64(in);
    const auto flags = binio::read_u64(in);
    const double knn = binio::read_f64(in);
    const double lin = binio::read_f64(in);
    if (flags & 1u) m.knn_accuracy = knn;
    if (flags & 2u) m.linear_accuracy = lin;
    s.history.push_back(m);
  }
  return s;
}

}  // namespace mmcl
