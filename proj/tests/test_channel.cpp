#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "rscran/channel.hpp"

using namespace rscran;

namespace {

NetworkTopology one_link(double d_km, int antennas = 1) {
  NetworkTopology t;
  t.bs_positions = {{0.0, 0.0}};
  t.user_positions = {{d_km, 0.0}};
  t.antennas = antennas;
  t.p_max_w = {0.1};
  t.fronthaul_bps = {200e6};
  return t;
}

}  // namespace

TEST(PathLoss, MatchesModelAtReferenceDistances) {
  EXPECT_DOUBLE_EQ(path_loss_db(1.0), 148.1);
  EXPECT_NEAR(path_loss_db(0.1), 110.5, 1e-12);
  EXPECT_NEAR(path_loss_db(10.0), 185.7, 1e-12);
}

TEST(PathLoss, RejectsNonPositiveDistance) {
  EXPECT_THROW(path_loss_db(0.0), std::domain_error);
  EXPECT_THROW(path_loss_db(-1.0), std::domain_error);
}

TEST(PathLoss, StrictlyIncreasing) {
  double prev = path_loss_db(1e-3);
  for (double d = 2e-3; d < 20.0; d *= 1.37) {
    const double cur = path_loss_db(d);
    EXPECT_GT(cur, prev);
    prev = cur;
  }
}

TEST(LargeScaleCsi, AmplitudeAtOneKilometre) {
  const auto csi = build_large_scale_csi(one_link(1.0));
  EXPECT_NEAR(csi.amplitude(0, 0), std::pow(10.0, -148.1 / 20.0), 1e-22);
  EXPECT_NEAR(csi.amplitude(0, 0), 3.936e-8, 1e-11);
}

TEST(LargeScaleCsi, ZeroShadowingGainGivesZeroAmplitude) {
  ShadowingConfig sh;
  sh.shadowing_gain = MatrixXd::Zero(1, 1);
  EXPECT_EQ(build_large_scale_csi(one_link(1.0), sh).amplitude(0, 0), 0.0);
}

TEST(LargeScaleCsi, AntennaGainScalesBySquareRoot) {
  ShadowingConfig sh;
  sh.antenna_gain = 4.0;
  const double base = build_large_scale_csi(one_link(1.0)).amplitude(0, 0);
  EXPECT_NEAR(build_large_scale_csi(one_link(1.0), sh).amplitude(0, 0), 2.0 * base, 1e-20);
}

TEST(LargeScaleCsi, CoincidentPositionsClampToFloor) {
  const auto csi = build_large_scale_csi(one_link(0.0));
  EXPECT_DOUBLE_EQ(csi.distance_km(0, 0), 0.010);
  EXPECT_NEAR(csi.amplitude(0, 0), std::pow(10.0, -path_loss_db(0.010) / 20.0), 1e-18);
}

TEST(LargeScaleCsi, LogNormalShadowingIsSeededAndCentred) {
  NetworkTopology t;
  for (int n = 0; n < 20; ++n) t.bs_positions.push_back({0.1 * n, 0.0});
  for (int k = 0; k < 50; ++k) t.user_positions.push_back({0.0, 0.05 * (k + 1)});
  t.p_max_w.assign(20, 0.1);
  t.fronthaul_bps.assign(20, 1e8);
  ShadowingConfig sh;
  sh.sigma_db = 8.0;
  sh.seed = 7;
  const auto a = build_large_scale_csi(t, sh);
  const auto b = build_large_scale_csi(t, sh);
  EXPECT_EQ(a.amplitude, b.amplitude);
  const auto plain = build_large_scale_csi(t);
  double mean = 0.0, var = 0.0;
  const int count = 20 * 50;
  for (int n = 0; n < 20; ++n)
    for (int k = 0; k < 50; ++k) {
      const double db = 20.0 * std::log10(a.amplitude(n, k) / plain.amplitude(n, k));
      mean += db / count;
      var += db * db / count;
    }
  var -= mean * mean;
  EXPECT_NEAR(mean, 0.0, 4.0 * 8.0 / std::sqrt(count));
  EXPECT_NEAR(std::sqrt(var), 8.0, 0.8);
}

TEST(Topology, ValidateRejectsBadInputs) {
  auto t = one_link(1.0);
  t.p_max_w = {0.0};
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t = one_link(1.0);
  t.fronthaul_bps = {-1.0};
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t = one_link(1.0);
  t.fronthaul_bps = {};
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t = one_link(1.0);
  t.user_positions.clear();
  EXPECT_THROW(t.validate(), std::invalid_argument);
  EXPECT_NO_THROW(one_link(1.0).validate());
}

TEST(Topology, NoiseVarianceFromPsdAndBandwidth) {
  const auto t = one_link(1.0);
  EXPECT_NEAR(t.noise_variance(), std::pow(10.0, -169.0 / 10.0) * 1e-3 * 10e6, 1e-25);
}

TEST(Sampling, ZeroAmplitudeGivesZeroSamples) {
  LargeScaleCsi csi;
  csi.amplitude = MatrixXd::Zero(2, 3);
  csi.distance_km = MatrixXd::Ones(2, 3);
  csi.antennas = 2;
  const auto s = sample_channels(csi, 5, 1);
  for (const auto& h : s.samples) {
    EXPECT_EQ(h.size(), 2 * 2 * 3);
    EXPECT_EQ(h.norm(), 0.0);
  }
}

TEST(Sampling, DeterministicAndThreadIndependent) {
  const auto csi = build_large_scale_csi(one_link(0.3, 2));
  const auto a = sample_channels(csi, 64, 99);
  const auto b = sample_channels(csi, 64, 99);
  const auto c = sample_channels(csi, 64, 99, 4);
  const auto d = sample_channels(csi, 64, 100);
  ASSERT_EQ(a.size(), 64);
  bool differs = false;
  for (int m = 0; m < 64; ++m) {
    EXPECT_EQ(a.samples[m], b.samples[m]);
    EXPECT_EQ(a.samples[m], c.samples[m]);
    differs = differs || a.samples[m] != d.samples[m];
  }
  EXPECT_TRUE(differs);
}

TEST(Sampling, SampleLayoutIsUserMajorThenBsThenAntenna) {
  NetworkTopology t;
  t.bs_positions = {{0.0, 0.0}, {1.0, 0.0}};
  t.user_positions = {{0.1, 0.0}, {0.9, 0.0}, {0.5, 0.5}};
  t.antennas = 2;
  t.p_max_w = {0.1, 0.1};
  t.fronthaul_bps = {1e8, 1e8};
  auto csi = build_large_scale_csi(t);
  csi.amplitude.setZero();
  csi.amplitude(1, 2) = 1.0;
  const auto s = sample_channels(csi, 3, 5);
  EXPECT_EQ(s.user_dim(), 4);
  for (int m = 0; m < 3; ++m) {
    const VectorXcd& h = s.samples[m];
    for (int i = 0; i < h.size(); ++i) {
      const bool live = i == 2 * 4 + 2 || i == 2 * 4 + 3;
      EXPECT_EQ(h[i] != cdouble(0.0), live) << "index " << i;
    }
    EXPECT_EQ(s.user_channel(m, 2).segment(2, 2), h.segment(10, 2));
  }
}

TEST(Sampling, EmpiricalPowerMatchesLargeScaleGain) {
  const auto csi = build_large_scale_csi(one_link(0.25, 1));
  const double d2 = csi.amplitude(0, 0) * csi.amplitude(0, 0);
  const int m_count = 100000;
  const auto s = sample_channels(csi, m_count, 2024);
  double p = 0.0, re2 = 0.0, im2 = 0.0;
  for (const auto& h : s.samples) {
    p += std::norm(h[0]);
    re2 += h[0].real() * h[0].real();
    im2 += h[0].imag() * h[0].imag();
  }
  p /= m_count;
  EXPECT_NEAR(p / d2, 1.0, 0.02);
  // |h|^2 / D^2 is Exp(1): standard deviation of the mean is D^2 / sqrt(M)
  EXPECT_LT(std::abs(p - d2), 5.0 * d2 / std::sqrt(m_count));
  EXPECT_NEAR(re2 / m_count / d2, 0.5, 0.01);
  EXPECT_NEAR(im2 / m_count / d2, 0.5, 0.01);
}

TEST(Sampling, CrossAntennaCovarianceVanishes) {
  const auto csi = build_large_scale_csi(one_link(0.25, 2));
  const double d2 = csi.amplitude(0, 0) * csi.amplitude(0, 0);
  const int m_count = 100000;
  const auto s = sample_channels(csi, m_count, 17);
  cdouble cross = 0.0;
  for (const auto& h : s.samples) cross += h[0] * std::conj(h[1]);
  cross /= m_count;
  EXPECT_LT(std::abs(cross), 5.0 * d2 / std::sqrt(m_count));
}

TEST(Sampling, RejectsEmptyRequest) {
  const auto csi = build_large_scale_csi(one_link(1.0));
  EXPECT_THROW(sample_channels(csi, 0, 1), std::invalid_argument);
}
