// Latent-trajectory densification. A trained encoder turns each frame into a
// feature vector; those samples form a time-ordered trajectory which is
// densified by piecewise Lagrange interpolation (a sliding window of nearby
// simulated nodes, degree window-1), and the decoder turns the densified
// trajectory back into frames. Objectives ride along with the identical
// interpolation scheme so every generated frame keeps a matched objective.

#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "erec/image.hpp"
#include "erec/tensor.hpp"

namespace erec {

enum class SampleSource { simulated, interpolated };

struct TrajectorySample {
  double time = 0.0;
  std::vector<double> z;
  double objective = 0.0;
  SampleSource source = SampleSource::simulated;
};

struct LatentTrajectory {
  std::vector<TrajectorySample> samples;

  void validate() const {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (i > 0 && samples[i].time <= samples[i - 1].time)
        throw std::invalid_argument("trajectory: times must be strictly increasing (sample " + std::to_string(i) + ")");
      if (samples[i].z.size() != samples[0].z.size())
        throw std::invalid_argument("trajectory: inconsistent feature dimension at sample " + std::to_string(i));
    }
  }

  std::size_t feature_dim() const { return samples.empty() ? 0 : samples[0].z.size(); }
};

// Value of the unique degree-(n-1) polynomial through the nodes.
inline double lagrange_interpolate(const std::vector<std::pair<double, double>>& nodes, double x) {
  const std::size_t n = nodes.size();
  if (n < 2 || n > 8) throw std::invalid_argument("lagrange_interpolate: need 2..8 nodes, got " + std::to_string(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (nodes[i].first == nodes[j].first)
        throw std::invalid_argument("lagrange_interpolate: duplicate node x = " + std::to_string(nodes[i].first));
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double basis = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      basis *= (x - nodes[j].first) / (nodes[i].first - nodes[j].first);
    }
    acc += nodes[i].second * basis;
  }
  return acc;
}

namespace detail {

// First node index of the interpolation window for the interval [i, i+1]:
// the `window` simulated nodes nearest the interval, clamped at the ends.
inline std::size_t window_start(std::size_t interval, std::size_t count, std::size_t window) {
  const std::size_t half = window / 2;
  const std::size_t lo = interval + 1 >= half ? interval + 1 - half : 0;
  return std::min(lo, count - window);
}

}  // namespace detail

// Inserts `substeps` interpolated samples between each adjacent pair of
// simulated samples, at uniform time fractions. Original samples are copied
// through untouched; output length is (n-1)*(substeps+1) + 1.
inline LatentTrajectory densify_trajectory(const LatentTrajectory& traj, int substeps = 9, int window = 4) {
  traj.validate();
  if (substeps < 1) throw std::invalid_argument("densify_trajectory: substeps must be >= 1");
  if (window < 2 || window % 2 != 0) throw std::invalid_argument("densify_trajectory: window must be even and >= 2");
  const std::size_t n = traj.samples.size();
  if (n < static_cast<std::size_t>(window))
    throw std::invalid_argument("densify_trajectory: need at least " + std::to_string(window) + " samples, got " +
                                std::to_string(n));
  const std::size_t dim = traj.feature_dim();

  LatentTrajectory out;
  out.samples.reserve((n - 1) * (substeps + 1) + 1);
  std::vector<std::pair<double, double>> nodes(window);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    out.samples.push_back(traj.samples[i]);
    const std::size_t w0 = detail::window_start(i, n, window);
    const double t0 = traj.samples[i].time, t1 = traj.samples[i + 1].time;
    for (int s = 1; s <= substeps; ++s) {
      TrajectorySample ins;
      ins.time = t0 + (t1 - t0) * s / (substeps + 1);
      ins.source = SampleSource::interpolated;
      ins.z.resize(dim);
      for (std::size_t d = 0; d < dim; ++d) {
        for (int k = 0; k < window; ++k)
          nodes[k] = {traj.samples[w0 + k].time, traj.samples[w0 + k].z[d]};
        ins.z[d] = lagrange_interpolate(nodes, ins.time);
      }
      for (int k = 0; k < window; ++k)
        nodes[k] = {traj.samples[w0 + k].time, traj.samples[w0 + k].objective};
      ins.objective = lagrange_interpolate(nodes, ins.time);
      out.samples.push_back(std::move(ins));
    }
  }
  out.samples.push_back(traj.samples.back());
  out.validate();
  return out;
}

struct ReconstructionRow {
  double time = 0.0;
  double interpolated = 0.0;
  double truth = 0.0;
  bool has_truth = false;
  double relative_error = 0.0;  // |truth - interpolated| / |truth|, truth != 0
};

struct ReconstructionReport {
  std::vector<ReconstructionRow> rows;  // one per interpolated sample
  double max_relative_error = 0.0;
  double mean_relative_error = 0.0;
  int multiplier = 1;  // frame-count multiplier substeps+1

  static double relative_error(double truth, double interpolated) {
    return std::abs(truth - interpolated) / std::abs(truth);
  }
};

// Densifies the objective series and, when a finer ground-truth series is
// supplied, scores every inserted sample against it. Truth is matched by
// dense index (inserted sample j of interval i sits at index i*(substeps+1)+j
// in the fine series), never by floating-point time comparison.
inline ReconstructionReport interpolate_objective(const LatentTrajectory& traj, int substeps = 9, int window = 4,
                                                  const std::vector<double>* fine_truth = nullptr) {
  for (const auto& s : traj.samples) {
    if (s.source != SampleSource::simulated)
      throw std::invalid_argument("interpolate_objective: trajectory must contain simulated samples only");
    if (!std::isfinite(s.objective))
      throw std::invalid_argument("interpolate_objective: sample at t = " + std::to_string(s.time) +
                                  " has no finite objective");
  }
  const LatentTrajectory dense = densify_trajectory(traj, substeps, window);
  if (fine_truth && fine_truth->size() != dense.samples.size())
    throw std::invalid_argument("interpolate_objective: truth series has " + std::to_string(fine_truth->size()) +
                                " entries, densified trajectory has " + std::to_string(dense.samples.size()));
  ReconstructionReport rep;
  rep.multiplier = substeps + 1;
  double err_sum = 0.0;
  std::size_t err_count = 0;
  for (std::size_t d = 0; d < dense.samples.size(); ++d) {
    if (dense.samples[d].source != SampleSource::interpolated) continue;
    ReconstructionRow row;
    row.time = dense.samples[d].time;
    row.interpolated = dense.samples[d].objective;
    if (fine_truth) {
      row.truth = (*fine_truth)[d];
      row.has_truth = true;
      if (row.truth != 0.0) {
        row.relative_error = ReconstructionReport::relative_error(row.truth, row.interpolated);
        rep.max_relative_error = std::max(rep.max_relative_error, row.relative_error);
        err_sum += row.relative_error;
        ++err_count;
      }
    }
    rep.rows.push_back(row);
  }
  if (err_count > 0) rep.mean_relative_error = err_sum / static_cast<double>(err_count);
  return rep;
}

struct LinearityResidual {
  double time = 0.0;
  double residual = 0.0;  // distance from z to the time-linear blend of its neighbours
};

// For each interior sample, the deviation of z from the affine combination of
// its two neighbours with time-based weights. Diagnostic only.
inline std::vector<LinearityResidual> local_linearity_diagnostic(const LatentTrajectory& traj) {
  traj.validate();
  if (traj.samples.size() < 3) throw std::invalid_argument("local_linearity_diagnostic: need at least 3 samples");
  std::vector<LinearityResidual> out;
  for (std::size_t i = 1; i + 1 < traj.samples.size(); ++i) {
    const auto& a = traj.samples[i - 1];
    const auto& b = traj.samples[i];
    const auto& c = traj.samples[i + 1];
    const double w1 = (c.time - b.time) / (c.time - a.time);
    double sq = 0.0;
    for (std::size_t d = 0; d < b.z.size(); ++d) {
      const double pred = w1 * a.z[d] + (1.0 - w1) * c.z[d];
      sq += (b.z[d] - pred) * (b.z[d] - pred);
    }
    out.push_back({b.time, std::sqrt(sq)});
  }
  return out;
}

// ---- model plumbing ----

// Model must expose input_height/width() and encode_mean(pixels)->vector,
// decode(z)->pixels; both erec::Avae instantiations qualify.
template <class Model, class T>
LatentTrajectory extract_trajectory(Model& model, const FrameSequence<T>& seq) {
  seq.validate();
  LatentTrajectory traj;
  for (const auto& f : seq.frames) {
    if (f.height() != model.input_height() || f.width() != model.input_width())
      throw std::invalid_argument("extract_trajectory: frame is " + std::to_string(f.height()) + "x" +
                                  std::to_string(f.width()) + ", model expects " +
                                  std::to_string(model.input_height()) + "x" + std::to_string(model.input_width()));
    TrajectorySample s;
    s.time = f.meta.time;
    s.objective = f.meta.objective;
    s.source = SampleSource::simulated;
    s.z = model.encode_mean(f.pixels);
    traj.samples.push_back(std::move(s));
  }
  traj.validate();
  return traj;
}

template <class Model>
FrameSequence<typename Model::value_type> decode_trajectory(Model& model, const LatentTrajectory& traj) {
  traj.validate();
  if (traj.feature_dim() != static_cast<std::size_t>(model.feature_dim()))
    throw std::invalid_argument("decode_trajectory: trajectory feature dim " + std::to_string(traj.feature_dim()) +
                                " does not match model feature dim " + std::to_string(model.feature_dim()));
  FrameSequence<typename Model::value_type> seq;
  seq.source = "decoded";
  int index = 0;
  for (const auto& s : traj.samples) {
    Frame<typename Model::value_type> f;
    f.pixels = model.decode(s.z);
    f.meta.iteration_index = index++;
    f.meta.time = s.time;
    f.meta.objective = s.objective;
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

// Smoothness ratio mean|second difference| / mean|first difference| of the
// latent series; below 1 means locally near-linear.
inline double trajectory_smoothness_ratio(const LatentTrajectory& traj) {
  const std::size_t n = traj.samples.size();
  if (n < 3) throw std::invalid_argument("trajectory_smoothness_ratio: need at least 3 samples");
  const std::size_t dim = traj.feature_dim();
  double d1 = 0.0, d2 = 0.0;
  std::size_t c1 = 0, c2 = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    double sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) sq += (traj.samples[i + 1].z[d] - traj.samples[i].z[d]) *
                                                (traj.samples[i + 1].z[d] - traj.samples[i].z[d]);
    d1 += std::sqrt(sq);
    ++c1;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) {
    double sq = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double v = traj.samples[i + 1].z[d] - 2.0 * traj.samples[i].z[d] + traj.samples[i - 1].z[d];
      sq += v * v;
    }
    d2 += std::sqrt(sq);
    ++c2;
  }
  if (d1 == 0.0) return 0.0;  // constant trajectory is perfectly smooth
  return (d2 / c2) / (d1 / c1);
}

// ---- trajectory file I/O: time_s,source,objective,z_0,z_1,... ----

inline void save_trajectory(const std::string& path, const LatentTrajectory& traj) {
  traj.validate();
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_trajectory: cannot open " + path);
  os << "time_s,source,objective";
  for (std::size_t d = 0; d < traj.feature_dim(); ++d) os << ",z_" << d;
  os << "\n";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf;
  };
  for (const auto& s : traj.samples) {
    put(s.time);
    os << "," << (s.source == SampleSource::simulated ? "simulated" : "interpolated") << ",";
    put(s.objective);
    for (double v : s.z) {
      os << ",";
      put(v);
    }
    os << "\n";
  }
  if (!os) throw std::runtime_error("save_trajectory: write failed for " + path);
}

inline LatentTrajectory load_trajectory(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_trajectory: cannot open " + path);
  std::string line;
  if (!std::getline(is, line) || line.rfind("time_s,source,objective", 0) != 0)
    throw std::runtime_error("load_trajectory: missing header in " + path);
  LatentTrajectory traj;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    TrajectorySample s;
    if (!std::getline(row, field, ',')) throw std::runtime_error("load_trajectory: bad row '" + line + "'");
    s.time = std::stod(field);
    if (!std::getline(row, field, ',')) throw std::runtime_error("load_trajectory: bad row '" + line + "'");
    if (field == "simulated") {
      s.source = SampleSource::simulated;
    } else if (field == "interpolated") {
      s.source = SampleSource::interpolated;
    } else {
      throw std::runtime_error("load_trajectory: unknown source '" + field + "'");
    }
    if (!std::getline(row, field, ',')) throw std::runtime_error("load_trajectory: bad row '" + line + "'");
    s.objective = std::stod(field);
    while (std::getline(row, field, ',')) s.z.push_back(std::stod(field));
    traj.samples.push_back(std::move(s));
  }
  traj.validate();
  return traj;
}

// Text table mirroring the reconstruction error report: one row per
// interpolated sample plus a summary block.
inline void save_reconstruction_report(const std::string& path, const ReconstructionReport& rep) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_reconstruction_report: cannot open " + path);
  os << "time_s,interpolated,truth,relative_error_percent\n";
  char buf[160];
  for (const auto& r : rep.rows) {
    if (r.has_truth && r.truth != 0.0) {
      std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g,%.2f\n", r.time, r.interpolated, r.truth,
                    100.0 * r.relative_error);
    } else if (r.has_truth) {
      std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g,\n", r.time, r.interpolated, r.truth);
    } else {
      std::snprintf(buf, sizeof(buf), "%.12g,%.12g,,\n", r.time, r.interpolated);
    }
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "# multiplier %d, max_relative_error %.6g, mean_relative_error %.6g\n",
                rep.multiplier, rep.max_relative_error, rep.mean_relative_error);
  os << buf;
  if (!os) throw std::runtime_error("save_reconstruction_report: write failed for " + path);
}

}  // namespace erec
