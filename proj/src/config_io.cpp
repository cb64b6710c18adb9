#include "iccs/config_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace iccs {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    auto num = [&]() {
      try {
        return std::stod(val);
      } catch (const std::exception&) {
        throw std::runtime_error("config line " + std::to_string(lineno) +
                                 ": bad number for " + key);
      }
    };
    if (key == "M") cfg.scenario.num_aps = static_cast<int>(num());
    else if (key == "N") cfg.scenario.antennas_per_ap = static_cast<int>(num());
    else if (key == "K") cfg.scenario.num_vehicles = static_cast<int>(num());
    else if (key == "N_t") cfg.scenario.tx_antennas = static_cast<int>(num());
    else if (key == "N_r") cfg.scenario.rx_antennas = static_cast<int>(num());
    else if (key == "B_Hz") cfg.scenario.bandwidth_hz = num();
    else if (key == "L") cfg.scenario.serving_set_size = static_cast<int>(num());
    else if (key == "area_km") cfg.scenario.area_side_km = num();
    else if (key == "seed") cfg.seed_base = static_cast<std::uint64_t>(num());
    else if (key == "f_MHz") cfg.pathloss.carrier_freq_mhz = num();
    else if (key == "h_AP_m") cfg.pathloss.ap_height_m = num();
    else if (key == "h_u_m") cfg.pathloss.user_height_m = num();
    else if (key == "d0_km") cfg.pathloss.breakpoint_d0_km = num();
    else if (key == "d1_km") cfg.pathloss.breakpoint_d1_km = num();
    else if (key == "noise_figure_dB") cfg.pathloss.noise_figure_db = num();
    else if (key == "D_bits") cfg.task.task_bits = num();
    else if (key == "alpha_loc") cfg.task.alpha_loc = num();
    else if (key == "alpha_mec") cfg.task.alpha_mec = num();
    else if (key == "alpha_cc") cfg.task.alpha_cc = num();
    else if (key == "kappa_loc") cfg.task.kappa_loc = num();
    else if (key == "kappa_mec") cfg.task.kappa_mec = num();
    else if (key == "P_max_dBm") cfg.task.p_max_w = dbm_to_mw(num()) / kMwPerW;
    else if (key == "P_MEC_max_dBm")
      cfg.task.p_mec_max_w = dbm_to_mw(num()) / kMwPerW;
    else if (key == "F_MEC_max") cfg.task.f_mec_max = num();
    else if (key == "F_CC_max") cfg.task.f_cc_max = num();
    else if (key == "R_f_max") cfg.task.r_f_max = num();
    else if (key == "SINR_req_dB") cfg.task.sinr_req = db_to_linear(num());
    else if (key == "f_loc") cfg.task.f_loc_max = num();
    else if (key == "optimize_f_loc")
      cfg.task.optimize_local_freq = num() != 0.0;
    else if (key == "zeta_offload") cfg.tol.zeta_offload = num();
    else if (key == "zeta_beam") cfg.tol.zeta_beam = num();
    else if (key == "zeta_outer") cfg.tol.zeta_outer = num();
    else if (key == "max_outer") cfg.tol.max_outer = static_cast<int>(num());
    else if (key == "trials") cfg.trials = static_cast<int>(num());
    else if (key == "scheme") cfg.scheme = scheme_from_name(val);
    else if (key == "axis") cfg.sweep_axis = val;
    else if (key == "out") cfg.out_path = val;
    else
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": unknown key " + key);
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

std::string config_to_text(const RunConfig& cfg) {
  std::ostringstream os;
  os.precision(12);
  os << "M = " << cfg.scenario.num_aps << "\n"
     << "N = " << cfg.scenario.antennas_per_ap << "\n"
     << "K = " << cfg.scenario.num_vehicles << "\n"
     << "N_t = " << cfg.scenario.tx_antennas << "\n"
     << "N_r = " << cfg.scenario.rx_antennas << "\n"
     << "B_Hz = " << cfg.scenario.bandwidth_hz << "\n"
     << "L = " << cfg.scenario.serving_set_size << "\n"
     << "area_km = " << cfg.scenario.area_side_km << "\n"
     << "seed = " << cfg.seed_base << "\n"
     << "f_MHz = " << cfg.pathloss.carrier_freq_mhz << "\n"
     << "h_AP_m = " << cfg.pathloss.ap_height_m << "\n"
     << "h_u_m = " << cfg.pathloss.user_height_m << "\n"
     << "d0_km = " << cfg.pathloss.breakpoint_d0_km << "\n"
     << "d1_km = " << cfg.pathloss.breakpoint_d1_km << "\n"
     << "noise_figure_dB = " << cfg.pathloss.noise_figure_db << "\n"
     << "D_bits = " << cfg.task.task_bits << "\n"
     << "alpha_loc = " << cfg.task.alpha_loc << "\n"
     << "alpha_mec = " << cfg.task.alpha_mec << "\n"
     << "alpha_cc = " << cfg.task.alpha_cc << "\n"
     << "kappa_loc = " << cfg.task.kappa_loc << "\n"
     << "kappa_mec = " << cfg.task.kappa_mec << "\n"
     << "P_max_dBm = " << mw_to_dbm(cfg.task.p_max_w * kMwPerW) << "\n"
     << "P_MEC_max_dBm = " << mw_to_dbm(cfg.task.p_mec_max_w * kMwPerW)
     << "\n"
     << "F_MEC_max = " << cfg.task.f_mec_max << "\n"
     << "F_CC_max = " << cfg.task.f_cc_max << "\n"
     << "R_f_max = " << cfg.task.r_f_max << "\n"
     << "SINR_req_dB = " << linear_to_db(cfg.task.sinr_req) << "\n"
     << "f_loc = " << cfg.task.f_loc_max << "\n"
     << "optimize_f_loc = " << (cfg.task.optimize_local_freq ? 1 : 0) << "\n"
     << "zeta_offload = " << cfg.tol.zeta_offload << "\n"
     << "zeta_beam = " << cfg.tol.zeta_beam << "\n"
     << "zeta_outer = " << cfg.tol.zeta_outer << "\n"
     << "max_outer = " << cfg.tol.max_outer << "\n"
     << "trials = " << cfg.trials << "\n"
     << "scheme = " << scheme_name(cfg.scheme) << "\n"
     << "axis = " << cfg.sweep_axis << "\n"
     << "out = " << cfg.out_path << "\n";
  return os.str();
}

}  // namespace iccs
