// Times the serial and OpenMP kernel backends on the shapes the model
// actually runs, and verifies that both produce bitwise-identical output
// (parallel loops split independent output elements only, so they must).

#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "offtopic/kernels.hpp"

using namespace offtopic;
namespace k = offtopic::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, std::mt19937& rng) {
  std::vector<float> v(n);
  for (auto& x : v) {
    x = static_cast<float>(static_cast<double>(rng()) / 4294967296.0 * 2.0 - 1.0);
  }
  return v;
}

struct BenchResult {
  double serial_ms = 0.0;
  double openmp_ms = 0.0;
  bool identical = false;
};

// Runs fn once per backend into separate buffers, then times `iters`
// repetitions per backend.
template <typename Fn>
BenchResult bench(Fn&& fn, std::vector<float>& out_serial, std::vector<float>& out_openmp,
                  int iters) {
  using clock = std::chrono::steady_clock;
  BenchResult r;

  k::set_backend(k::Backend::Serial);
  fn(out_serial.data());
  auto t0 = clock::now();
  for (int i = 0; i < iters; ++i) fn(out_serial.data());
  r.serial_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count() / iters;

  k::set_backend(k::Backend::OpenMP);
  fn(out_openmp.data());
  t0 = clock::now();
  for (int i = 0; i < iters; ++i) fn(out_openmp.data());
  r.openmp_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count() / iters;

  r.identical = std::memcmp(out_serial.data(), out_openmp.data(),
                            out_serial.size() * sizeof(float)) == 0;
  return r;
}

void report(const char* name, const BenchResult& r) {
  std::printf("%-28s %10.3f %10.3f %9.2fx   %s\n", name, r.serial_ms, r.openmp_ms,
              r.openmp_ms > 0 ? r.serial_ms / r.openmp_ms : 0.0,
              r.identical ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel backend benchmark"};
  int iters = 50;
  int t_len = 280, d_in = 300, filters = 128, kernel = 7;
  app.add_option("--iters", iters, "Repetitions per measurement");
  app.add_option("--seq-len", t_len, "Sequence length");
  app.add_option("--dim", d_in, "Input width");
  app.add_option("--filters", filters, "Output channels");
  app.add_option("--kernel", kernel, "Convolution kernel width (odd)");
  CLI11_PARSE(app, argc, argv);

  std::printf("backends: serial vs openmp (compiled %s, max threads %d)\n",
              k::openmp_compiled() ? "yes" : "no", k::max_threads());
  std::printf("shapes: seq %d, dim %d, filters %d, kernel %d, %d iters\n\n", t_len, d_in, filters,
              kernel, iters);
  std::printf("%-28s %10s %10s %10s\n", "kernel", "serial ms", "openmp ms", "speedup");

  std::mt19937 rng(7);
  const auto x = random_vec(static_cast<std::size_t>(t_len) * d_in, rng);
  const auto w = random_vec(static_cast<std::size_t>(kernel) * d_in * filters, rng);
  const auto bias = random_vec(static_cast<std::size_t>(filters), rng);
  const auto g_pre = random_vec(static_cast<std::size_t>(t_len) * filters, rng);
  const auto a = random_vec(static_cast<std::size_t>(d_in) * d_in, rng);
  const auto b = random_vec(static_cast<std::size_t>(d_in) * d_in, rng);
  const auto v = random_vec(static_cast<std::size_t>(d_in), rng);

  bool all_identical = true;
  {
    std::vector<float> s(static_cast<std::size_t>(t_len) * filters), o(s.size());
    auto r = bench(
        [&](float* out) {
          k::conv1d_same(x.data(), t_len, d_in, w.data(), kernel, filters, bias.data(),
                         k::Activation::Relu, out);
        },
        s, o, iters);
    report("conv1d_same", r);
    all_identical = all_identical && r.identical;
  }
  {
    std::vector<float> s(static_cast<std::size_t>(t_len) * d_in), o(s.size());
    auto r = bench(
        [&](float* out) {
          k::conv1d_grad_input(g_pre.data(), t_len, d_in, w.data(), kernel, filters, out);
        },
        s, o, iters);
    report("conv1d_grad_input", r);
    all_identical = all_identical && r.identical;
  }
  {
    std::vector<float> s(static_cast<std::size_t>(kernel) * d_in * filters + filters);
    std::vector<float> o(s.size());
    auto r = bench(
        [&](float* out) {
          std::memset(out + static_cast<std::size_t>(kernel) * d_in * filters, 0,
                      sizeof(float) * filters);
          k::conv1d_grad_weights(x.data(), t_len, d_in, g_pre.data(), kernel, filters, out,
                                 out + static_cast<std::size_t>(kernel) * d_in * filters);
        },
        s, o, iters);
    report("conv1d_grad_weights", r);
    all_identical = all_identical && r.identical;
  }
  {
    std::vector<float> s(static_cast<std::size_t>(d_in) * d_in), o(s.size());
    auto r = bench([&](float* out) { k::matmul(a.data(), d_in, d_in, b.data(), d_in, out); }, s, o,
                   iters);
    report("matmul", r);
    all_identical = all_identical && r.identical;
  }
  {
    std::vector<float> s(static_cast<std::size_t>(d_in)), o(s.size());
    auto r = bench([&](float* out) { k::matvec(a.data(), d_in, d_in, v.data(), out); }, s, o,
                   iters * 10);
    report("matvec", r);
    all_identical = all_identical && r.identical;
  }

  std::printf("\nparity: %s\n", all_identical ? "all kernels bitwise-equal across backends"
                                              : "BACKEND MISMATCH DETECTED");
  return all_identical ? 0 : 1;
}
