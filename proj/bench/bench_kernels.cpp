// Serial vs OpenMP timing for the two data-parallel hot spots:
// dense matmul and the mel spectrogram front end.

#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include "ttm/audio.hpp"
#include "ttm/kernels.hpp"

using clock_t_ = std::chrono::steady_clock;

static double seconds(clock_t_::time_point a, clock_t_::time_point b) {
  return std::chrono::duration<double>(b - a).count();
}

template <typename F>
static double time_best_of(int reps, F&& f) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    auto t0 = clock_t_::now();
    f();
    auto t1 = clock_t_::now();
    best = std::min(best, seconds(t0, t1));
  }
  return best;
}

int main() {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> nd(0.0, 1.0);

  std::printf("%-28s %10s %10s %8s\n", "kernel", "serial(ms)", "omp(ms)",
              "speedup");

  for (std::size_t n : {64, 128, 256, 512}) {
    std::vector<double> a(n * n), b(n * n), c(n * n), c2(n * n);
    for (auto& x : a) x = nd(rng);
    for (auto& x : b) x = nd(rng);
    const int reps = n <= 128 ? 20 : 5;
    double ts = time_best_of(
        reps, [&] { ttm::kernels::matmul_serial(a.data(), b.data(), c.data(), n, n, n); });
    double tp = time_best_of(
        reps, [&] { ttm::kernels::matmul_omp(a.data(), b.data(), c2.data(), n, n, n); });
    double maxdiff = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i)
      maxdiff = std::max(maxdiff, std::abs(c[i] - c2[i]));
    char name[64];
    std::snprintf(name, sizeof name, "matmul %zux%zu", n, n);
    std::printf("%-28s %10.3f %10.3f %7.2fx%s\n", name, ts * 1e3, tp * 1e3,
                ts / tp, maxdiff == 0.0 ? "" : "  MISMATCH");
  }

  for (double secs : {1.0, 5.0, 20.0}) {
    ttm::audio::Waveform w;
    w.sample_rate = 16000;
    w.samples.resize(static_cast<std::size_t>(secs * 16000));
    for (auto& s : w.samples) s = 0.3 * nd(rng);
    ttm::audio::MelSpectrogram ms, mp;
    double ts = time_best_of(3, [&] { ms = ttm::audio::mel_spectrogram_serial(w); });
    double tp = time_best_of(3, [&] { mp = ttm::audio::mel_spectrogram(w); });
    bool same = ms.values == mp.values;
    char name[64];
    std::snprintf(name, sizeof name, "mel %.0fs @16kHz", secs);
    std::printf("%-28s %10.3f %10.3f %7.2fx%s\n", name, ts * 1e3, tp * 1e3,
                ts / tp, same ? "" : "  MISMATCH");
  }
  return 0;
}
