#include "sigdet/normal.hpp"

#include <boost/math/distributions/normal.hpp>

#include "sigdet/error.hpp"

namespace sigdet {

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) fail(ErrorCode::DomainError, "normal quantile needs p in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

}  // namespace sigdet
