#include <gtest/gtest.h>

#include "synthetic.hpp"

using namespace quench;

TEST(Geometry, SyntheticHalfSpaceSuite) {
  const auto cases = synthetic::run_suite();
  EXPECT_GE(cases.size(), 30u);
  for (const auto& c : cases)
    EXPECT_TRUE(c.pass) << c.name << ": " << c.value << " vs " << c.expected << " (tol " << c.tolerance << ")";
}

TEST(Geometry, LeastSquaresRecoversALine) {
  const std::vector<double> x{0.0, 1.0, 2.0, 3.5}, y{1.0, 3.0, 5.0, 8.0};
  const auto f = least_squares(x, y);
  EXPECT_NEAR(f.slope, 2.0, 1e-14);
  EXPECT_NEAR(f.intercept, 1.0, 1e-14);
}

TEST(Geometry, PointSelectionIsSeeded) {
  const auto s = synthetic::half_space();
  const auto fb = extract_free_boundary(s.u, 1e-12);
  const auto a = select_fb_points(fb, 42, 8), b = select_fb_points(fb, 42, 8), c = select_fb_points(fb, 43, 8);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(distance(a[i], b[i]), 0.0);
  bool differs = a.size() != c.size();
  for (std::size_t i = 0; !differs && i < a.size(); ++i) differs = distance(a[i], c[i]) > 0.0;
  EXPECT_TRUE(differs);
}

TEST(Geometry, RefinementBand) {
  EXPECT_TRUE(compare_refinement(2.0, 2.3).pass);
  EXPECT_FALSE(compare_refinement(2.0, 2.5).pass);
  EXPECT_FALSE(compare_refinement(0.0, 1.0).pass);
}

TEST(Geometry, EstimatorsRejectTooFewScales) {
  const auto s = synthetic::half_space();
  const auto fb = extract_free_boundary(s.u, 1e-12);
  EXPECT_THROW(surface_measure_boxcount(fb, {0.0, 0.0}, 0.5, {0.02, 0.04}), std::exception);
  EXPECT_THROW(spherical_mean_check(s.u, {0.0, 0.0}, {0.1, 0.2}, s.alpha), std::exception);
  const auto dist = distance_field(fb);
  EXPECT_THROW(neighborhood_volume(fb, dist, {0.0, 0.0}, 0.5, 0.5), std::exception);
}
