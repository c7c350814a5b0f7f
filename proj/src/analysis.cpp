#include "mgrid/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fftw3.h>

namespace mgrid {
namespace {

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double shift_pct(double communicated, double actual) {
  const double diff = std::abs(communicated - actual);
  if (diff == 0.0) return 0.0;
  return diff / std::abs(actual) * 100.0;
}

std::vector<std::size_t> window_steps(const RunArtifact& run, double t0, double t1) {
  if (!(t1 > t0)) throw ConfigError("analysis window must satisfy t0 < t1");
  std::vector<std::size_t> idx;
  const double eps = 1e-9 * std::max(1.0, std::abs(t1));
  for (std::size_t s = 0; s < run.steps(); ++s) {
    if (run.time[s] >= t0 - eps && run.time[s] <= t1 + eps) idx.push_back(s);
  }
  if (idx.empty()) throw ConfigError("analysis window holds no samples");
  return idx;
}

void detrend(std::vector<double>& x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  for (double& v : x) v -= mean;
}

}  // namespace

Histogram freedman_diaconis(std::span<const double> samples) {
  Histogram h;
  if (samples.empty()) return h;
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front(), hi = sorted.back();
  const double iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
  const double width = 2.0 * iqr / std::cbrt(static_cast<double>(sorted.size()));
  std::size_t bins = 1;
  if (width > 0.0 && hi > lo) {
    bins = static_cast<std::size_t>(std::ceil((hi - lo) / width));
    bins = std::clamp<std::size_t>(bins, 1, 10000);
  }
  h.counts.assign(bins, 0);
  h.edges.resize(bins + 1);
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t b = 0; b <= bins; ++b) {
    h.edges[b] = lo + span * static_cast<double>(b) / static_cast<double>(bins);
  }
  h.edges.back() = hi > lo ? hi : lo + 1.0;
  for (double v : sorted) {
    auto b = static_cast<std::size_t>((v - lo) / span * static_cast<double>(bins));
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

SignalStats signal_stats(std::span<const double> samples) {
  if (samples.empty()) throw ConfigError("statistics of an empty sample set");
  SignalStats s;
  s.count = static_cast<long>(samples.size());
  s.min = *std::min_element(samples.begin(), samples.end());
  s.max = *std::max_element(samples.begin(), samples.end());
  double sum = 0.0;
  for (double v : samples) sum += v;
  s.mean = sum / static_cast<double>(s.count);
  double sq = 0.0;
  for (double v : samples) sq += (v - s.mean) * (v - s.mean);
  s.variance = sq / static_cast<double>(s.count);
  s.histogram = freedman_diaconis(samples);
  return s;
}

StatsComparison compare_stats(const RunArtifact& run, double t0, double t1) {
  const auto idx = window_steps(run, t0, t1);
  StatsComparison cmp;
  cmp.t0 = t0;
  cmp.t1 = t1;
  std::vector<double> a(idx.size()), c(idx.size());
  for (int i = 0; i < run.n_dgus; ++i) {
    for (int k = 0; k < 3; ++k) {
      for (std::size_t m = 0; m < idx.size(); ++m) {
        a[m] = run.output(idx[m], i)[k];
        c[m] = run.sent_output(idx[m], i)[k];
      }
      StatsShift e;
      e.dgu = i;
      e.component = k;
      e.actual = signal_stats(a);
      e.communicated = signal_stats(c);
      e.mean_shift_pct = shift_pct(e.communicated.mean, e.actual.mean);
      e.variance_shift_pct = shift_pct(e.communicated.variance, e.actual.variance);
      cmp.max_mean_shift_pct = std::max(cmp.max_mean_shift_pct, e.mean_shift_pct);
      cmp.max_variance_shift_pct = std::max(cmp.max_variance_shift_pct, e.variance_shift_pct);
      cmp.entries.push_back(std::move(e));
    }
  }
  return cmp;
}

std::size_t SpectrumReport::bin_of(double f) const {
  const auto b = static_cast<std::size_t>(std::lround(f / resolution));
  return std::min(b, frequency.size() - 1);
}

double SpectrumReport::peak(const std::vector<double>& magnitude, double f_max) const {
  double best = 0.0;
  for (std::size_t b = 1; b < frequency.size() && frequency[b] <= f_max; ++b) {
    best = std::max(best, magnitude[b]);
  }
  return best;
}

std::vector<double> dft_magnitude(std::span<const double> x, std::size_t n_fft,
                                  double* parseval_error) {
  if (x.empty()) throw ConfigError("spectrum of an empty signal");
  n_fft = std::max(n_fft, x.size());
  const std::size_t bins = n_fft / 2 + 1;
  double* in = fftw_alloc_real(n_fft);
  fftw_complex* out = fftw_alloc_complex(bins);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n_fft), in, out, FFTW_ESTIMATE);
  std::fill(in, in + n_fft, 0.0);
  std::copy(x.begin(), x.end(), in);
  fftw_execute(plan);

  const double n = static_cast<double>(x.size());
  std::vector<double> mag(bins);
  double spectral = 0.0;
  for (std::size_t k = 0; k < bins; ++k) {
    const double p = out[k][0] * out[k][0] + out[k][1] * out[k][1];
    const bool paired = k != 0 && !(n_fft % 2 == 0 && k == bins - 1);
    spectral += paired ? 2.0 * p : p;
    mag[k] = std::sqrt(p) / n;
  }
  fftw_destroy_plan(plan);
  fftw_free(out);
  fftw_free(in);

  if (parseval_error) {
    double energy = 0.0;
    for (double v : x) energy += v * v;
    spectral /= static_cast<double>(n_fft);
    *parseval_error = energy > 0.0 ? std::abs(spectral - energy) / energy
                                   : std::abs(spectral - energy);
  }
  return mag;
}

SpectrumReport spectrum(const RunArtifact& run, int dgu, int component, double t0,
                        double t1) {
  if (dgu < 0 || dgu >= run.n_dgus || component < 0 || component > 2) {
    throw ConfigError("spectrum signal selector out of range");
  }
  const double T_bar = run.summary.T_bar;
  if (!(T_bar > 0.0)) throw ConfigError("run carries no watermark period");
  if (t1 - t0 < 2.0 * T_bar) {
    throw ConfigError("spectrum window must span at least one watermark period");
  }
  const auto idx = window_steps(run, t0, t1);
  const double dt = run.summary.dt;
  SpectrumReport rep;
  rep.dgu = dgu;
  rep.component = component;
  rep.t0 = t0;
  rep.t1 = t1;
  rep.samples = static_cast<long>(idx.size());
  rep.f_delta = 1.0 / (2.0 * T_bar);
  const auto min_size = static_cast<std::size_t>(std::ceil(5.0 / (rep.f_delta * dt)));
  rep.fft_size = static_cast<long>(std::max(idx.size(), min_size));
  rep.resolution = 1.0 / (static_cast<double>(rep.fft_size) * dt);

  const WatermarkConfig wm{run.summary.slope.at(dgu), T_bar};
  std::vector<double> comm(idx.size()), act(idx.size()), mark(idx.size());
  for (std::size_t m = 0; m < idx.size(); ++m) {
    comm[m] = run.sent_output(idx[m], dgu)[component];
    act[m] = run.output(idx[m], dgu)[component];
    mark[m] = watermark_value(run.time[idx[m]], wm)[component];
  }
  detrend(comm);
  detrend(act);
  detrend(mark);
  double e1 = 0.0, e2 = 0.0, e3 = 0.0;
  rep.communicated = dft_magnitude(comm, rep.fft_size, &e1);
  rep.actual = dft_magnitude(act, rep.fft_size, &e2);
  rep.watermark = dft_magnitude(mark, rep.fft_size, &e3);
  rep.parseval_error = std::max({e1, e2, e3});
  rep.frequency.resize(rep.communicated.size());
  for (std::size_t k = 0; k < rep.frequency.size(); ++k) {
    rep.frequency[k] = static_cast<double>(k) * rep.resolution;
  }
  return rep;
}

std::vector<LinkDetection> detection_report(const RunArtifact& run) {
  std::vector<LinkDetection> out;
  for (const auto& l : run.summary.links) {
    LinkDetection d;
    d.from = l.from;
    d.to = l.to;
    d.c = l.c;
    d.attacked = l.attacked;
    d.alarmed = l.alarm.raised;
    if (l.alarm.raised) {
      d.t_alarm = l.alarm.t;
      d.component = l.alarm.component;
      if (l.attack) d.latency = l.alarm.t - l.attack->Ta;
    }
    d.guaranteed_detection = l.guaranteed_detection;
    out.push_back(d);
  }
  return out;
}

}  // namespace mgrid
