#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mesvar/stats.hpp"
#include "mesvar/types.hpp"

#include <cmath>

using namespace mesvar;

TEST_CASE("median and quantile conventions") {
  CHECK(median({3.0, 1.0, 2.0}) == doctest::Approx(2.0));
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == doctest::Approx(2.5));
  // linear interpolation at q*(n-1)
  CHECK(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.8) == doctest::Approx(4.2));
  CHECK(quantile({10.0}, 0.3) == doctest::Approx(10.0));
  CHECK(quantile({1.0, 2.0}, 0.0) == doctest::Approx(1.0));
  CHECK(quantile({1.0, 2.0}, 1.0) == doctest::Approx(2.0));
  CHECK_THROWS_AS(quantile({}, 0.5), NumericalError);
}

TEST_CASE("scaled MAD") {
  // median 0, |dev| = [0,0,1,1,100] -> MAD = 1
  CHECK(scaled_mad({0.0, 0.0, 1.0, -1.0, 100.0}, 0.0) == doctest::Approx(1.4826));
}

TEST_CASE("t distribution survival function matches reference values") {
  // Reference values computed with an independent implementation of the
  // regularized incomplete beta.
  CHECK(student_t_sf(1.0, 5.0) == doctest::Approx(1.8160873382456127e-01).epsilon(1e-12));
  CHECK(student_t_sf(2.5, 3.7) == doctest::Approx(3.5911011455913376e-02).epsilon(1e-12));
  CHECK(student_t_sf(-1.8, 12.0) == doctest::Approx(9.5148366102743553e-01).epsilon(1e-12));
  CHECK(student_t_sf(0.0, 1.0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(student_t_sf(10.0, 2.5) == doctest::Approx(2.2207478836537109e-03).epsilon(1e-12));
  // deep tail keeps relative accuracy
  CHECK(student_t_sf(25.0, 40.0) == doctest::Approx(2.4816717222391583e-26).epsilon(1e-10));
}

TEST_CASE("chi-squared survival function matches reference values") {
  CHECK(chi_squared_sf(3.84, 1.0) == doctest::Approx(5.0043521248705189e-02).epsilon(1e-12));
  CHECK(chi_squared_sf(0.5, 1.0) == doctest::Approx(4.7950012218695337e-01).epsilon(1e-12));
  CHECK(chi_squared_sf(10.0, 4.0) == doctest::Approx(4.0427681994512792e-02).epsilon(1e-12));
  CHECK(chi_squared_sf(25.0, 1.0) == doctest::Approx(5.7330314375838751e-07).epsilon(1e-10));
  CHECK(chi_squared_sf(1.0, 2.0) == doctest::Approx(6.0653065971263342e-01).epsilon(1e-12));
}

TEST_CASE("normal survival function") {
  CHECK(normal_sf(1.96) == doctest::Approx(2.4997895148220435e-02).epsilon(1e-12));
  CHECK(normal_sf(5.0) == doctest::Approx(2.8665157187919328e-07).epsilon(1e-10));
  CHECK(normal_sf(0.0) == doctest::Approx(0.5));
}

TEST_CASE("two-sided p-value") {
  CHECK(t_test_p(0.0, 10.0) == doctest::Approx(1.0));
  CHECK(t_test_p(2.0, 10.0) == doctest::Approx(2.0 * student_t_sf(2.0, 10.0)));
  CHECK(t_test_p(-2.0, 10.0) == doctest::Approx(t_test_p(2.0, 10.0)));
}

TEST_CASE("large-df t converges to the normal") {
  for (double t : {0.5, 1.96, 3.0})
    CHECK(student_t_sf(t, 1e8) == doctest::Approx(normal_sf(t)).epsilon(1e-6));
}
