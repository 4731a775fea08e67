#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "linrl/linear_mdp.hpp"

namespace linrl {

namespace detail {

inline nlohmann::json matrix_to_json(const MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline MatrixXd matrix_from_json(const nlohmann::json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows == 0 ? 0 : static_cast<int>(j.at(0).size());
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int k = 0; k < cols; ++k) m(i, k) = j.at(i).at(k).get<double>();
  return m;
}

inline nlohmann::json vector_to_json(const VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline VectorXd vector_from_json(const nlohmann::json& j) {
  VectorXd v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) v[i] = j.at(i).get<double>();
  return v;
}

}  // namespace detail

inline nlohmann::json mdp_to_json(const LinearMdp& mdp) {
  nlohmann::json j;
  j["horizon"] = mdp.horizon;
  j["state_count"] = mdp.state_count;
  j["action_count"] = mdp.action_count;
  j["critic_dim"] = mdp.critic_dim;
  j["initial_state"] = mdp.initial_state;
  j["fit_tol"] = mdp.fit_tol;
  j["rank_deficient"] = mdp.rank_deficient;
  j["feature_rescale"] = mdp.feature_rescale;
  j["reward_scale"] = mdp.reward_affine.scale;
  j["reward_offset"] = mdp.reward_affine.offset;
  j["features"] = detail::matrix_to_json(mdp.features);
  nlohmann::json psi = nlohmann::json::array(), ups = nlohmann::json::array(),
                 p = nlohmann::json::array(), r = nlohmann::json::array();
  for (int h = 0; h < mdp.horizon; ++h) {
    psi.push_back(detail::matrix_to_json(mdp.next_state_measure[h]));
    ups.push_back(detail::vector_to_json(mdp.reward_vec[h]));
    p.push_back(detail::matrix_to_json(mdp.transitions[h]));
    r.push_back(detail::vector_to_json(mdp.rewards[h]));
  }
  j["psi"] = std::move(psi);
  j["upsilon"] = std::move(ups);
  j["tabular_p"] = std::move(p);
  j["tabular_r"] = std::move(r);
  return j;
}

inline LinearMdp mdp_from_json(const nlohmann::json& j) {
  LinearMdp mdp;
  mdp.horizon = j.at("horizon").get<int>();
  mdp.state_count = j.at("state_count").get<int>();
  mdp.action_count = j.at("action_count").get<int>();
  mdp.critic_dim = j.at("critic_dim").get<int>();
  mdp.initial_state = j.at("initial_state").get<int>();
  mdp.fit_tol = j.at("fit_tol").get<double>();
  mdp.rank_deficient = j.at("rank_deficient").get<bool>();
  mdp.feature_rescale = j.at("feature_rescale").get<double>();
  mdp.reward_affine.scale = j.at("reward_scale").get<double>();
  mdp.reward_affine.offset = j.at("reward_offset").get<double>();
  mdp.features = detail::matrix_from_json(j.at("features"));
  for (int h = 0; h < mdp.horizon; ++h) {
    mdp.next_state_measure.push_back(detail::matrix_from_json(j.at("psi").at(h)));
    mdp.reward_vec.push_back(detail::vector_from_json(j.at("upsilon").at(h)));
    mdp.transitions.push_back(detail::matrix_from_json(j.at("tabular_p").at(h)));
    mdp.rewards.push_back(detail::vector_from_json(j.at("tabular_r").at(h)));
  }
  mdp.validate();
  return mdp;
}

inline LinearMdp load_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mdp file: " + path);
  nlohmann::json j;
  in >> j;
  return mdp_from_json(j);
}

inline void save_mdp(const LinearMdp& mdp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write mdp file: " + path);
  out << mdp_to_json(mdp).dump(2) << "\n";
}

}  // namespace linrl
