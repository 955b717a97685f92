#include "lqmkv/game_io.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace lqmkv {

namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index rows, Eigen::Index cols,
                                 const std::string& name) {
  if (j.is_number()) {
    if (rows != 1 || cols != 1) throw ConfigError(name + ": scalar given for a matrix block");
    return Eigen::MatrixXd::Constant(1, 1, j.get<double>());
  }
  if (!j.is_array()) throw ConfigError(name + ": expected a matrix (array of rows)");
  // A flat array is a column vector.
  if (!j.empty() && j[0].is_number()) {
    if (cols != 1 || static_cast<Eigen::Index>(j.size()) != rows)
      throw ConfigError(name + ": vector length mismatch");
    Eigen::MatrixXd m(rows, 1);
    for (Eigen::Index r = 0; r < rows; ++r) m(r, 0) = j[static_cast<std::size_t>(r)].get<double>();
    return m;
  }
  if (static_cast<Eigen::Index>(j.size()) != rows) throw ConfigError(name + ": row count mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ConfigError(name + ": column count mismatch");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

MatrixPath path_from_json(const json& j, Eigen::Index rows, Eigen::Index cols,
                          const std::string& name) {
  if (j.is_null()) return MatrixPath::zero(rows, cols);
  if (j.is_object() && j.contains("grid")) {
    const auto& grid_j = j.at("grid");
    const auto& vals_j = j.at("values");
    if (!grid_j.is_array() || !vals_j.is_array() || grid_j.size() != vals_j.size())
      throw ConfigError(name + ": grid/values arrays must have equal length");
    std::vector<double> grid;
    std::vector<Eigen::MatrixXd> values;
    for (std::size_t k = 0; k < grid_j.size(); ++k) {
      grid.push_back(grid_j[k].get<double>());
      values.push_back(matrix_from_json(vals_j[k], rows, cols, name));
    }
    return MatrixPath(std::move(grid), std::move(values));
  }
  if (j.is_object() && j.contains("constant"))
    return MatrixPath::constant(matrix_from_json(j.at("constant"), rows, cols, name));
  return MatrixPath::constant(matrix_from_json(j, rows, cols, name));
}

json path_to_json(const MatrixPath& p) {
  if (p.is_constant()) return json{{"constant", matrix_to_json(p.value())}};
  json vals = json::array();
  for (const auto& v : p.values()) vals.push_back(matrix_to_json(v));
  return json{{"grid", p.grid()}, {"values", std::move(vals)}};
}

MatrixPath opt_path(const json& parent, const std::string& key, Eigen::Index rows,
                    Eigen::Index cols) {
  if (!parent.contains(key)) return MatrixPath::zero(rows, cols);
  return path_from_json(parent.at(key), rows, cols, key);
}

}  // namespace

GameSpec parse_game(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("game spec: JSON parse error: ") + ex.what());
  }
  GameSpec g;
  try {
    const auto& dims = j.at("dimensions");
    g.dynamics.d = dims.at("d").get<int>();
    g.dynamics.control_dims = dims.at("players").get<std::vector<int>>();
    g.dynamics.n = static_cast<int>(g.dynamics.control_dims.size());
    g.dynamics.kappa = dims.value("noises", 1);
    const int d = g.dynamics.d;
    const int n = g.dynamics.n;
    const int kap = g.dynamics.kappa;

    if (j.contains("horizon")) {
      const auto& h = j.at("horizon");
      const std::string type = h.at("type").get<std::string>();
      if (type == "finite")
        g.horizon = h.at("T").get<double>();
      else if (type == "infinite")
        g.horizon = std::nullopt;
      else
        throw ConfigError("horizon.type must be finite or infinite");
    }
    g.cost.rho = j.value("discount", 0.0);

    const json dyn = j.value("dynamics", json::object());
    g.dynamics.b_x = opt_path(dyn, "b_x", d, d);
    g.dynamics.b_x_tilde = opt_path(dyn, "b_x_tilde", d, d);
    g.dynamics.beta = opt_path(dyn, "beta", d, 1);
    const auto per_player = [&](const char* key, std::vector<MatrixPath>& out) {
      out.clear();
      const json arr = dyn.value(key, json::array());
      for (int i = 0; i < n; ++i) {
        const int di = g.dynamics.control_dims[static_cast<std::size_t>(i)];
        if (static_cast<int>(arr.size()) > i)
          out.push_back(path_from_json(arr[static_cast<std::size_t>(i)], d, di, key));
        else
          out.push_back(MatrixPath::zero(d, di));
      }
    };
    per_player("b", g.dynamics.b);
    per_player("b_tilde", g.dynamics.b_tilde);
    const auto per_noise = [&](const char* key, std::vector<MatrixPath>& out, Eigen::Index cols) {
      out.clear();
      const json arr = dyn.value(key, json::array());
      for (int l = 0; l < kap; ++l) {
        if (static_cast<int>(arr.size()) > l)
          out.push_back(path_from_json(arr[static_cast<std::size_t>(l)], d, cols, key));
        else
          out.push_back(MatrixPath::zero(d, cols));
      }
    };
    per_noise("sigma_x", g.dynamics.sigma_x, d);
    per_noise("sigma_x_tilde", g.dynamics.sigma_x_tilde, d);
    per_noise("gamma", g.dynamics.gamma, 1);
    const auto per_noise_player = [&](const char* key,
                                      std::vector<std::vector<MatrixPath>>& out) {
      out.clear();
      const json arr = dyn.value(key, json::array());
      for (int l = 0; l < kap; ++l) {
        std::vector<MatrixPath> row;
        for (int i = 0; i < n; ++i) {
          const int di = g.dynamics.control_dims[static_cast<std::size_t>(i)];
          if (static_cast<int>(arr.size()) > l &&
              static_cast<int>(arr[static_cast<std::size_t>(l)].size()) > i)
            row.push_back(path_from_json(arr[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)],
                                         d, di, key));
          else
            row.push_back(MatrixPath::zero(d, di));
        }
        out.push_back(std::move(row));
      }
    };
    per_noise_player("sigma", g.dynamics.sigma);
    per_noise_player("sigma_tilde", g.dynamics.sigma_tilde);

    const json cost = j.value("cost", json::object());
    const json players = cost.value("players", json::array());
    g.cost.players.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const json pj = static_cast<int>(players.size()) > i
                          ? players[static_cast<std::size_t>(i)]
                          : json::object();
      auto& pc = g.cost.players[static_cast<std::size_t>(i)];
      pc.Q = opt_path(pj, "Q", d, d);
      pc.Q_tilde = opt_path(pj, "Q_tilde", d, d);
      pc.L_x = opt_path(pj, "L_x", d, 1);
      pc.I.clear();
      pc.I_tilde.clear();
      pc.N.clear();
      pc.N_tilde.clear();
      pc.L.clear();
      const json Ij = pj.value("I", json::array());
      const json Itj = pj.value("I_tilde", json::array());
      const json Nj = pj.value("N", json::array());
      const json Ntj = pj.value("N_tilde", json::array());
      const json Lj = pj.value("L", json::array());
      for (int k = 0; k < n; ++k) {
        const int dk = g.dynamics.control_dims[static_cast<std::size_t>(k)];
        const auto pick = [&](const json& arr, Eigen::Index rows, Eigen::Index cols,
                              const char* name) {
          if (static_cast<int>(arr.size()) > k)
            return path_from_json(arr[static_cast<std::size_t>(k)], rows, cols, name);
          return MatrixPath::zero(rows, cols);
        };
        pc.I.push_back(pick(Ij, dk, d, "I"));
        pc.I_tilde.push_back(pick(Itj, dk, d, "I_tilde"));
        pc.N.push_back(pick(Nj, dk, dk, "N"));
        pc.N_tilde.push_back(pick(Ntj, dk, dk, "N_tilde"));
        pc.L.push_back(pick(Lj, dk, 1, "L"));
      }
      const json Gj = pj.value("G", json::array());
      const json Gtj = pj.value("G_tilde", json::array());
      pc.G.assign(static_cast<std::size_t>(n), {});
      pc.G_tilde.assign(static_cast<std::size_t>(n), {});
      for (int k = 0; k < n; ++k) {
        const int dk = g.dynamics.control_dims[static_cast<std::size_t>(k)];
        for (int l = 0; l < n; ++l) {
          const int dl = g.dynamics.control_dims[static_cast<std::size_t>(l)];
          MatrixPath gkl = MatrixPath::zero(dk, dl);
          MatrixPath gtkl = MatrixPath::zero(dk, dl);
          if (static_cast<int>(Gj.size()) > k &&
              static_cast<int>(Gj[static_cast<std::size_t>(k)].size()) > l &&
              !Gj[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)].is_null())
            gkl = path_from_json(Gj[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)],
                                 dk, dl, "G");
          if (static_cast<int>(Gtj.size()) > k &&
              static_cast<int>(Gtj[static_cast<std::size_t>(k)].size()) > l &&
              !Gtj[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)].is_null())
            gtkl = path_from_json(Gtj[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)],
                                  dk, dl, "G_tilde");
          pc.G[static_cast<std::size_t>(k)].push_back(std::move(gkl));
          pc.G_tilde[static_cast<std::size_t>(k)].push_back(std::move(gtkl));
        }
      }
      pc.P = pj.contains("P") ? matrix_from_json(pj.at("P"), d, d, "P")
                              : Eigen::MatrixXd::Zero(d, d);
      pc.P_tilde = pj.contains("P_tilde") ? matrix_from_json(pj.at("P_tilde"), d, d, "P_tilde")
                                          : Eigen::MatrixXd::Zero(d, d);
      pc.r = pj.contains("r") ? Eigen::VectorXd(matrix_from_json(pj.at("r"), d, 1, "r"))
                              : Eigen::VectorXd::Zero(d);
    }

    const json x0 = j.value("x0", json::object());
    g.x0_mean = x0.contains("mean") ? Eigen::VectorXd(matrix_from_json(x0.at("mean"), d, 1, "mean"))
                                    : Eigen::VectorXd::Zero(d);
    g.x0_cov = x0.contains("cov") ? matrix_from_json(x0.at("cov"), d, d, "cov")
                                  : Eigen::MatrixXd::Zero(d, d);
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("game spec: ") + ex.what());
  }
  g.validate_structure();
  return g;
}

GameSpec load_game(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open game spec file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_game(ss.str());
}

std::string game_to_json(const GameSpec& g) {
  json j;
  j["dimensions"] = {{"d", g.dynamics.d},
                     {"players", g.dynamics.control_dims},
                     {"noises", g.dynamics.kappa}};
  if (g.finite())
    j["horizon"] = {{"type", "finite"}, {"T", *g.horizon}};
  else
    j["horizon"] = {{"type", "infinite"}};
  j["discount"] = g.cost.rho;
  json dyn;
  dyn["b_x"] = path_to_json(g.dynamics.b_x);
  dyn["b_x_tilde"] = path_to_json(g.dynamics.b_x_tilde);
  dyn["beta"] = path_to_json(g.dynamics.beta);
  dyn["b"] = json::array();
  dyn["b_tilde"] = json::array();
  for (int i = 0; i < g.dynamics.n; ++i) {
    dyn["b"].push_back(path_to_json(g.dynamics.b[static_cast<std::size_t>(i)]));
    dyn["b_tilde"].push_back(path_to_json(g.dynamics.b_tilde[static_cast<std::size_t>(i)]));
  }
  dyn["sigma_x"] = json::array();
  dyn["sigma_x_tilde"] = json::array();
  dyn["gamma"] = json::array();
  dyn["sigma"] = json::array();
  dyn["sigma_tilde"] = json::array();
  for (int l = 0; l < g.dynamics.kappa; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    dyn["sigma_x"].push_back(path_to_json(g.dynamics.sigma_x[lu]));
    dyn["sigma_x_tilde"].push_back(path_to_json(g.dynamics.sigma_x_tilde[lu]));
    dyn["gamma"].push_back(path_to_json(g.dynamics.gamma[lu]));
    json row = json::array(), row_t = json::array();
    for (int i = 0; i < g.dynamics.n; ++i) {
      row.push_back(path_to_json(g.dynamics.sigma[lu][static_cast<std::size_t>(i)]));
      row_t.push_back(path_to_json(g.dynamics.sigma_tilde[lu][static_cast<std::size_t>(i)]));
    }
    dyn["sigma"].push_back(std::move(row));
    dyn["sigma_tilde"].push_back(std::move(row_t));
  }
  j["dynamics"] = std::move(dyn);
  json players = json::array();
  for (const auto& pc : g.cost.players) {
    json pj;
    pj["Q"] = path_to_json(pc.Q);
    pj["Q_tilde"] = path_to_json(pc.Q_tilde);
    pj["L_x"] = path_to_json(pc.L_x);
    pj["I"] = json::array();
    pj["I_tilde"] = json::array();
    pj["N"] = json::array();
    pj["N_tilde"] = json::array();
    pj["L"] = json::array();
    for (std::size_t k = 0; k < pc.N.size(); ++k) {
      pj["I"].push_back(path_to_json(pc.I[k]));
      pj["I_tilde"].push_back(path_to_json(pc.I_tilde[k]));
      pj["N"].push_back(path_to_json(pc.N[k]));
      pj["N_tilde"].push_back(path_to_json(pc.N_tilde[k]));
      pj["L"].push_back(path_to_json(pc.L[k]));
    }
    pj["G"] = json::array();
    pj["G_tilde"] = json::array();
    for (std::size_t k = 0; k < pc.G.size(); ++k) {
      json row = json::array(), row_t = json::array();
      for (std::size_t l = 0; l < pc.G[k].size(); ++l) {
        if (l == k) {
          row.push_back(nullptr);
          row_t.push_back(nullptr);
        } else {
          row.push_back(path_to_json(pc.G[k][l]));
          row_t.push_back(path_to_json(pc.G_tilde[k][l]));
        }
      }
      pj["G"].push_back(std::move(row));
      pj["G_tilde"].push_back(std::move(row_t));
    }
    pj["P"] = matrix_to_json(pc.P);
    pj["P_tilde"] = matrix_to_json(pc.P_tilde);
    pj["r"] = matrix_to_json(pc.r);
    players.push_back(std::move(pj));
  }
  j["cost"] = {{"players", std::move(players)}};
  j["x0"] = {{"mean", matrix_to_json(g.x0_mean)}, {"cov", matrix_to_json(g.x0_cov)}};
  return j.dump(2);
}

LawProfile load_laws(const std::string& path, const GameSpec& game) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open law file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& ex) {
    throw ConfigError(std::string("law file: JSON parse error: ") + ex.what());
  }
  const json players = j.contains("players") ? j.at("players") : j;
  if (!players.is_array() || static_cast<int>(players.size()) != game.n_players())
    throw ConfigError("law file: need one law per player");
  LawProfile laws;
  for (int i = 0; i < game.n_players(); ++i) {
    const auto& pj = players[static_cast<std::size_t>(i)];
    const int di = game.control_dim(i);
    AffineLaw law;
    law.gain = path_from_json(pj.at("gain"), di, game.d(), "gain");
    law.mean_gain = path_from_json(pj.at("mean_gain"), di, game.d(), "mean_gain");
    law.intercept = path_from_json(pj.at("intercept"), di, 1, "intercept");
    laws.push_back(std::move(law));
  }
  return laws;
}

std::string laws_to_json(const LawProfile& laws) {
  json players = json::array();
  for (const auto& law : laws) {
    players.push_back(json{{"gain", path_to_json(law.gain)},
                           {"mean_gain", path_to_json(law.mean_gain)},
                           {"intercept", path_to_json(law.intercept)}});
  }
  return json{{"players", players}}.dump(2);
}

}  // namespace lqmkv
