#ifndef OULMM_IO_HPP
#define OULMM_IO_HPP

#include <string>

#include "oulmm/gqlf.hpp"
#include "oulmm/simulate.hpp"

namespace oulmm {

// Dataset CSV: header row
//   individual_id,time,y,x_1..x_{p_beta},z_1..z_{p_b}
// with individuals contiguous and times ascending within individual.
// The JSON sidecar declares p_beta, p_b and the Psi parameterization.
void write_dataset_csv(const Dataset& data, const PsiParameterization& psi,
                       const std::string& csv_path,
                       const std::string& sidecar_path);
Dataset read_dataset_csv(const std::string& csv_path,
                         const std::string& sidecar_path,
                         PsiParameterization* psi_out);

std::string psi_kind_name(PsiParameterization::Kind kind);
PsiParameterization::Kind psi_kind_from_name(const std::string& name);

void write_fit_json(const FitResult& fit, const std::string& path);

Scenario read_scenario_json(const std::string& path);
Scenario read_scenario_json_string(const std::string& text);
void write_scenario_json(const Scenario& scenario, const std::string& path);

}  // namespace oulmm

#endif
