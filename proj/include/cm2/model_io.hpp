// Copyright 2026 The cm2sim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cm2/model.hpp"

// JSON model files. Field names are fixed by docs/model_schema.md: complex
// numbers are [re, im] pairs and matrices are row-major nested arrays.

namespace cm2 {

using Json = nlohmann::json;

inline Json matrix_to_json(const CMatrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      row.push_back(Json::array({m(r, c).real(), m(r, c).imag()}));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline CMatrix matrix_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty())
    throw std::invalid_argument(where + ": expected a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.at(0).size());
  CMatrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Json& row = j.at(static_cast<std::size_t>(r));
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw std::invalid_argument(where + ": ragged matrix rows");
    for (Eigen::Index c = 0; c < cols; ++c) {
      const Json& e = row.at(static_cast<std::size_t>(c));
      if (!e.is_array() || e.size() != 2)
        throw std::invalid_argument(where + ": complex entries must be [re, im]");
      m(r, c) = Complex(e.at(0).get<double>(), e.at(1).get<double>());
    }
  }
  return m;
}

inline Json model_to_json(const CM2Model& model) {
  Json j;
  j["system_dim"] = model.system_dim;
  j["rho_x0"] = matrix_to_json(model.rho_x0.matrix);
  j["ancilla_units"] = Json::array();
  for (const DensityMatrix& u : model.ancilla.units)
    j["ancilla_units"].push_back(matrix_to_json(u.matrix));
  j["collision_stages"] = Json::array();
  for (const CollisionStage& st : model.collision.stages)
    j["collision_stages"].push_back(
        Json{{"unit", st.unit}, {"unitary", matrix_to_json(st.unitary)}});
  j["measurement_ops"] = Json::array();
  for (const CMatrix& m : model.measurement.operators)
    j["measurement_ops"].push_back(matrix_to_json(m));
  j["labels"] = model.measurement.labels;
  return j;
}

inline CM2Model model_from_json(const Json& j) {
  CM2Model model;
  try {
    model.system_dim = j.at("system_dim").get<Eigen::Index>();
    model.rho_x0 = DensityMatrix{matrix_from_json(j.at("rho_x0"), "rho_x0")};
    for (const Json& u : j.at("ancilla_units"))
      model.ancilla.units.push_back(DensityMatrix{matrix_from_json(u, "ancilla_units")});
    for (const Json& st : j.at("collision_stages"))
      model.collision.stages.push_back(CollisionStage{
          st.at("unit").get<std::size_t>(),
          matrix_from_json(st.at("unitary"), "collision_stages.unitary")});
    for (const Json& m : j.at("measurement_ops"))
      model.measurement.operators.push_back(matrix_from_json(m, "measurement_ops"));
    if (j.contains("labels"))
      model.measurement.labels = j.at("labels").get<std::vector<std::string>>();
  } catch (const Json::exception& e) {
    throw std::invalid_argument(std::string("model JSON: ") + e.what());
  }
  return model;
}

inline CM2Model load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open model file '" + path + "'");
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw std::invalid_argument("model file '" + path + "': " + e.what());
  }
  return model_from_json(j);
}

inline void save_model(const CM2Model& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write model file '" + path + "'");
  out << model_to_json(model).dump(2) << "\n";
}

}  // namespace cm2
