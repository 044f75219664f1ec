// Builds a short synthetic dataset, trains a small model and prints the
// predicted front-left load with its posterior standard deviation next to
// the true value on one test scenario.

#include <cmath>
#include <cstdio>

#include "dbpnet/dataset.hpp"
#include "dbpnet/estimators.hpp"
#include "dbpnet/geometry_io.hpp"
#include "dbpnet/plant.hpp"

using namespace dbpnet;

int main() {
  const GeometryFile geo = default_geometry();
  const plant::VehicleModel model(plant::VehicleParams{}, geo);

  DatasetConfig dc;
  dc.duration = 8.0;
  dc.dt = 0.002;
  dc.split = {{"urban_stop_go", "rural_rough", "emergency_brake"}, {"highway_lane_change"}, {"urban_turns"}};
  const Dataset ds = build_dataset(model, dc);

  const auto qc = plant::quarter_car_params(model.params(), model.table(), 2500.0);
  est::TrainConfig tc;
  tc.epochs = 10;
  tc.width = 32;
  tc.layers = 2;
  tc.dpc_hidden = {32};
  const est::Model m = est::train(ds, tc, qc, "dbpnet", [](const est::Model&, const est::EpochLog& e) {
    std::printf("epoch %2d  objective %.4f  val rmse %.1f N\n", e.epoch, e.total, e.val_rmse);
  });

  const ScenarioData& sc = *ds.split(SplitName::test).front();
  Rng rng(1);
  const auto out = est::predict_series(m, sc.inputs, 20, rng);
  std::printf("\n%8s %10s %8s %10s\n", "t [s]", "mean [N]", "std [N]", "true [N]");
  for (std::size_t i = 0; i < sc.inputs.size(); i += 20)
    std::printf("%8.2f %10.1f %8.1f %10.1f\n", sc.inputs[i].t, out.mean[i][0], std::sqrt(out.variance[i][0]),
                sc.loads[i][0]);
  const auto metrics = est::evaluate(out.mean, sc.loads);
  std::printf("\n%s rmse %.1f N, max error %.1f N\n", sc.name.c_str(), metrics.rmse_mean, metrics.max_error_mean);
}
