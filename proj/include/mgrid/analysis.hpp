#pragma once

// Post-processing of run artifacts: output statistics with and without the
// watermark, spectra, detection latencies.

#include <optional>
#include <span>
#include <vector>

#include "mgrid/engine.hpp"

namespace mgrid {

struct Histogram {
  std::vector<double> edges;  // counts.size() + 1 entries
  std::vector<long> counts;
};

/// Freedman-Diaconis binning over [min, max]; a single bin when the
/// interquartile range vanishes.
Histogram freedman_diaconis(std::span<const double> samples);

struct SignalStats {
  long count = 0;
  double mean = 0.0;
  double variance = 0.0;  // population variance
  double min = 0.0;
  double max = 0.0;
  Histogram histogram;
};

/// Throws ConfigError on an empty sample set.
SignalStats signal_stats(std::span<const double> samples);

struct StatsShift {
  int dgu = 0;
  int component = 0;
  SignalStats actual;
  SignalStats communicated;
  double mean_shift_pct = 0.0;      // |mean_c - mean_a| / |mean_a| * 100
  double variance_shift_pct = 0.0;  // |var_c - var_a| / var_a * 100
};

struct StatsComparison {
  double t0 = 0.0;
  double t1 = 0.0;
  std::vector<StatsShift> entries;  // dgu-major, component-minor
  double max_mean_shift_pct = 0.0;
  double max_variance_shift_pct = 0.0;

  const StatsShift& at(int dgu, int component) const { return entries[3 * dgu + component]; }
};

/// Communicated (y + Delta) versus measured outputs on samples with
/// t0 <= t <= t1. Throws ConfigError if the window holds no sample.
StatsComparison compare_stats(const RunArtifact& run, double t0 = 5.0, double t1 = 9.0);

struct SpectrumReport {
  int dgu = 0;
  int component = 0;
  double t0 = 0.0;
  double t1 = 0.0;
  long samples = 0;
  long fft_size = 0;
  double f_delta = 0.0;
  double resolution = 0.0;  // Hz per bin
  std::vector<double> frequency;
  std::vector<double> communicated;
  std::vector<double> actual;
  std::vector<double> watermark;
  double parseval_error = 0.0;  // worst relative error over the three signals

  std::size_t bin_of(double f) const;
  /// Largest magnitude over 0 < f <= f_max.
  double peak(const std::vector<double>& magnitude, double f_max) const;
};

/// One-sided magnitude |X_k| / N of a real signal zero-padded to n_fft, with
/// N the unpadded length. Also returns the relative Parseval mismatch.
std::vector<double> dft_magnitude(std::span<const double> x, std::size_t n_fft,
                                  double* parseval_error = nullptr);

/// Spectra of the mean-removed communicated, measured and watermark signals of
/// one DGU component on [t0, t1]. Zero-padding brings the bin spacing down
/// to f_delta / 5. Throws ConfigError when the window is shorter than one
/// watermark period.
SpectrumReport spectrum(const RunArtifact& run, int dgu, int component, double t0 = 5.0,
                        double t1 = 9.0);

struct LinkDetection {
  int from = 0;
  int to = 0;
  double c = 0.0;
  bool attacked = false;
  bool alarmed = false;
  std::optional<double> t_alarm;
  std::optional<double> latency;
  int component = -1;
  std::optional<double> guaranteed_detection;
};

std::vector<LinkDetection> detection_report(const RunArtifact& run);

}  // namespace mgrid
