#include "dmpc/model_io.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>

namespace dmpc {

namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (int r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows > 0 ? static_cast<int>(j.at(0).size()) : 0;
  Eigen::MatrixXd M(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) M(r, c) = j.at(r).at(c).get<double>();
  return M;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) v(i) = j.at(i).get<double>();
  return v;
}

} // namespace

std::string model_to_json(const SystemModel& model) {
  json j;
  j["schema_version"] = 1;
  j["partition"]["state_dims"] = model.state_dims;
  j["partition"]["input_dims"] = model.input_dims;

  json ab = json::array();
  json bb = json::array();
  for (int i = 0; i < model.M; ++i) {
    for (int k = 0; k < model.M; ++k) {
      const auto Ablk = model.A.block(model.state_offset(i), model.state_offset(k),
                                      model.state_dims[i], model.state_dims[k]);
      if ((Ablk.array() != 0.0).any()) ab.push_back(json::array({i, k, matrix_to_json(Ablk)}));
      const auto Bblk = model.B.block(model.state_offset(i), model.input_offset(k),
                                      model.state_dims[i], model.input_dims[k]);
      if ((Bblk.array() != 0.0).any()) bb.push_back(json::array({i, k, matrix_to_json(Bblk)}));
    }
  }
  j["A_blocks"] = std::move(ab);
  j["B_blocks"] = std::move(bb);

  json qb = json::array(), rb = json::array(), cons = json::array();
  for (const auto& s : model.subsystems) {
    qb.push_back(matrix_to_json(s.Q));
    rb.push_back(matrix_to_json(s.R));
    json c;
    c["Cx"] = matrix_to_json(s.Cx);
    c["dx"] = vector_to_json(s.dx);
    c["Cu"] = matrix_to_json(s.Cu);
    c["du"] = vector_to_json(s.du);
    cons.push_back(std::move(c));
  }
  j["Q_blocks"] = std::move(qb);
  j["R_blocks"] = std::move(rb);
  j["constraints"] = std::move(cons);
  return j.dump(2);
}

SystemModel model_from_json(const std::string& text) {
  json j = json::parse(text);
  if (j.value("schema_version", 0) != 1)
    throw std::runtime_error("model_from_json: unsupported schema version");

  SystemModel model;
  model.state_dims = j.at("partition").at("state_dims").get<std::vector<int>>();
  model.input_dims = j.at("partition").at("input_dims").get<std::vector<int>>();
  model.M = static_cast<int>(model.state_dims.size());
  const int n = model.state_dim();
  const int m = model.input_dim();
  model.A = Eigen::MatrixXd::Zero(n, n);
  model.B = Eigen::MatrixXd::Zero(n, m);
  for (const auto& blk : j.at("A_blocks")) {
    const int i = blk.at(0).get<int>(), k = blk.at(1).get<int>();
    model.A.block(model.state_offset(i), model.state_offset(k), model.state_dims[i],
                  model.state_dims[k]) = matrix_from_json(blk.at(2));
  }
  for (const auto& blk : j.at("B_blocks")) {
    const int i = blk.at(0).get<int>(), k = blk.at(1).get<int>();
    model.B.block(model.state_offset(i), model.input_offset(k), model.state_dims[i],
                  model.input_dims[k]) = matrix_from_json(blk.at(2));
  }

  model.subsystems.resize(model.M);
  for (int i = 0; i < model.M; ++i) {
    auto& s = model.subsystems[i];
    s.Q = matrix_from_json(j.at("Q_blocks").at(i));
    s.R = matrix_from_json(j.at("R_blocks").at(i));
    const auto& c = j.at("constraints").at(i);
    s.Cx = matrix_from_json(c.at("Cx"));
    s.dx = vector_from_json(c.at("dx"));
    s.Cu = matrix_from_json(c.at("Cu"));
    s.du = vector_from_json(c.at("du"));
  }

  model.neighbors.resize(model.M);
  for (int i = 0; i < model.M; ++i) {
    for (int k = 0; k < model.M; ++k) {
      const bool a_nz = (model.A.block(model.state_offset(i), model.state_offset(k),
                                       model.state_dims[i], model.state_dims[k])
                             .array() != 0.0)
                            .any();
      const bool b_nz = (model.B.block(model.state_offset(i), model.input_offset(k),
                                       model.state_dims[i], model.input_dims[k])
                             .array() != 0.0)
                            .any();
      if (a_nz || b_nz) model.neighbors[i].push_back(k);
    }
  }
  return model;
}

void save_model(const SystemModel& model, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("save_model: cannot open " + path);
  f << model_to_json(model) << "\n";
  if (!f) throw std::runtime_error("save_model: write failed for " + path);
}

SystemModel load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_model: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return model_from_json(text);
}

} // namespace dmpc
