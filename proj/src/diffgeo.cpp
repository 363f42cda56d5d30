#include "anc/diffgeo.hpp"

#include "anc/models.hpp"

namespace anc {

TaylorFrame<double> build_frame(const QuantileModel& model,
                                const VectorXd& x_hat,
                                const VectorXd& theta_hat) {
  if (x_hat.size() != model.n())
    throw Error(ErrorKind::InvalidDimension, "x_hat has wrong size");
  return make_frame<double>(model.quantile(x_hat, theta_hat),
                            model.dquantile_dtheta(x_hat, theta_hat),
                            model.d2quantile_dtheta2(x_hat, theta_hat));
}

}  // namespace anc
