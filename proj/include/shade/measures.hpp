#pragma once

// Geodesic shadow/bright boundary connectivity on the superpixel graph.
//
//   d_geo(p,q)   shortest-path sum of mean-Lab distances between neighbours;
//                edges joining a shadow-side and a bright-side superpixel
//                are impassable
//   D(p,q)       exp(-d_geo^2 / (2 sigma_clr^2)), 0 when unreachable
//   Len(p,X)     sum over q in X of D(p,q);  Area(p) = sum over all q of D(p,q)
//   con_X(p)     Len(p,X) / sqrt(Area(p))
//   gamma_X(p)   exp(-con_X(p) / (2 sigma_con^2))                  local
//   Gamma_X(p)   sum_i w(p,i) gamma_X(i) / sum_i w(p,i)             global
//                with w = exp(-d_app^2/(2 sigma_app^2)) exp(-d_spa^2/(2 sigma_spa^2))

#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <queue>
#include <string>
#include <utility>
#include <vector>

#include "shade/error.hpp"
#include "shade/superpix.hpp"

namespace shade {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct MeasureParams {
  double sigma_clr = 5.0;
  double sigma_con = 1.0;
  double sigma_app = 10.0;
  double sigma_spa = 40.0;
  /// Ablation: use con^2 in the local measure.
  bool squared_con = false;

  void validate() const {
    require(sigma_clr > 0 && sigma_con > 0 && sigma_app > 0 && sigma_spa > 0, "config",
            "all measure sigmas must be > 0");
  }
};

struct WeightedEdge {
  int to;
  double weight;
};

/// Adjacency list; weights may be +inf.
struct Graph {
  std::vector<std::vector<WeightedEdge>> adj;

  int size() const { return static_cast<int>(adj.size()); }

  void add_edge(int a, int b, double w) {
    adj[a].push_back({b, w});
    adj[b].push_back({a, w});
  }
};

inline std::vector<char> membership(int n, const std::vector<int>& ids) {
  std::vector<char> m(n, 0);
  for (int i : ids) m[i] = 1;
  return m;
}

/// Superpixel graph with Lab distance weights; shd-lit edges are +inf.
inline Graph build_graph(const SuperpixelSegmentation& seg, const BoundarySets& bounds) {
  Graph g{std::vector<std::vector<WeightedEdge>>(seg.count)};
  const auto in_shd = membership(seg.count, bounds.shd);
  const auto in_lit = membership(seg.count, bounds.lit);
  for (auto [i, j] : seg.adjacent_pairs()) {
    const bool cut = (in_shd[i] && in_lit[j]) || (in_lit[i] && in_shd[j]);
    g.add_edge(i, j, cut ? kInf : lab_distance(seg.mean_lab[i], seg.mean_lab[j]));
  }
  return g;
}

/// N x N row-major distance matrix.
struct GeodesicMatrix {
  int n = 0;
  std::vector<double> d;

  double operator()(int i, int j) const { return d[static_cast<std::size_t>(i) * n + j]; }
};

/// Dijkstra from every node; infinite edges are never relaxed.
inline GeodesicMatrix geodesic_all_pairs(const Graph& g) {
  const int n = g.size();
  GeodesicMatrix m{n, std::vector<double>(static_cast<std::size_t>(n) * n, kInf)};
  using Item = std::pair<double, int>;
  for (int s = 0; s < n; ++s) {
    double* dist = m.d.data() + static_cast<std::size_t>(s) * n;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[s] = 0.0;
    pq.push({0.0, s});
    while (!pq.empty()) {
      const auto [du, u] = pq.top();
      pq.pop();
      if (du > dist[u]) continue;
      for (const auto& e : g.adj[u]) {
        if (!std::isfinite(e.weight)) continue;
        const double nd = du + e.weight;
        if (nd < dist[e.to]) {
          dist[e.to] = nd;
          pq.push({nd, e.to});
        }
      }
    }
  }
  return m;
}

struct Connectivity {
  std::vector<double> len_shd, len_lit, area, con_shd, con_lit;
};

inline double geodesic_affinity(double d_geo, double sigma_clr) {
  if (!std::isfinite(d_geo)) return 0.0;
  return std::exp(-d_geo * d_geo / (2.0 * sigma_clr * sigma_clr));
}

inline Connectivity connectivity(const GeodesicMatrix& geo, const BoundarySets& bounds, double sigma_clr) {
  require(sigma_clr > 0.0, "config", "sigma_clr must be > 0");
  const int n = geo.n;
  Connectivity c;
  c.len_shd.assign(n, 0.0);
  c.len_lit.assign(n, 0.0);
  c.area.assign(n, 0.0);
  c.con_shd.resize(n);
  c.con_lit.resize(n);
  for (int p = 0; p < n; ++p) {
    for (int i = 0; i < n; ++i) c.area[p] += geodesic_affinity(geo(p, i), sigma_clr);
    for (int q : bounds.shd) c.len_shd[p] += geodesic_affinity(geo(p, q), sigma_clr);
    for (int q : bounds.lit) c.len_lit[p] += geodesic_affinity(geo(p, q), sigma_clr);
    c.con_shd[p] = c.len_shd[p] / std::sqrt(c.area[p]);
    c.con_lit[p] = c.len_lit[p] / std::sqrt(c.area[p]);
  }
  return c;
}

struct LocalMeasure {
  std::vector<double> gamma, probability;
};

inline LocalMeasure local_measures(const std::vector<double>& con, double sigma_con, bool squared = false) {
  require(sigma_con > 0.0, "config", "sigma_con must be > 0");
  LocalMeasure m;
  for (double c : con) {
    const double x = squared ? c * c : c;
    m.gamma.push_back(std::exp(-x / (2.0 * sigma_con * sigma_con)));
    m.probability.push_back(1.0 - m.gamma.back());
  }
  return m;
}

struct GlobalMeasure {
  std::vector<double> gamma, probability;
};

/// Appearance/space weighted mean of the local measure over all superpixels.
inline GlobalMeasure global_measures(const std::vector<double>& gamma, const SuperpixelSegmentation& seg,
                                     const MeasureParams& params) {
  params.validate();
  require(static_cast<int>(gamma.size()) == seg.count, "shape", "gamma length != superpixel count");
  const int n = seg.count;
  GlobalMeasure g;
  g.gamma.resize(n);
  g.probability.resize(n);
  const double ka = 1.0 / (2.0 * params.sigma_app * params.sigma_app);
  const double ks = 1.0 / (2.0 * params.sigma_spa * params.sigma_spa);
  for (int p = 0; p < n; ++p) {
    double num = 0.0, den = 0.0;
    for (int i = 0; i < n; ++i) {
      const double da = lab_distance(seg.mean_lab[p], seg.mean_lab[i]);
      const double dx = seg.centroid[p][0] - seg.centroid[i][0], dy = seg.centroid[p][1] - seg.centroid[i][1];
      const double wgt = std::exp(-da * da * ka) * std::exp(-(dx * dx + dy * dy) * ks);
      num += wgt * gamma[i];
      den += wgt;
    }
    g.gamma[p] = num / den;
    g.probability[p] = 1.0 - g.gamma[p];
  }
  return g;
}

struct MeasureSet {
  std::vector<double> len_shd, len_lit, area;
  std::vector<double> con_shd, con_lit;
  std::vector<double> gamma_shd, gamma_lit;  // local
  std::vector<double> Gamma_shd, Gamma_lit;  // global
  std::vector<double> pr_loc_shd, pr_loc_lit, pr_glb_shd, pr_glb_lit;

  int size() const { return static_cast<int>(con_shd.size()); }
};

inline MeasureSet compute_measures(const SuperpixelSegmentation& seg, const BoundarySets& bounds,
                                   const MeasureParams& params) {
  params.validate();
  const auto geo = geodesic_all_pairs(build_graph(seg, bounds));
  const auto con = connectivity(geo, bounds, params.sigma_clr);
  const auto loc_shd = local_measures(con.con_shd, params.sigma_con, params.squared_con);
  const auto loc_lit = local_measures(con.con_lit, params.sigma_con, params.squared_con);
  const auto glb_shd = global_measures(loc_shd.gamma, seg, params);
  const auto glb_lit = global_measures(loc_lit.gamma, seg, params);
  MeasureSet m;
  m.len_shd = con.len_shd;
  m.len_lit = con.len_lit;
  m.area = con.area;
  m.con_shd = con.con_shd;
  m.con_lit = con.con_lit;
  m.gamma_shd = loc_shd.gamma;
  m.gamma_lit = loc_lit.gamma;
  m.pr_loc_shd = loc_shd.probability;
  m.pr_loc_lit = loc_lit.probability;
  m.Gamma_shd = glb_shd.gamma;
  m.Gamma_lit = glb_lit.gamma;
  m.pr_glb_shd = glb_shd.probability;
  m.pr_glb_lit = glb_lit.probability;
  return m;
}

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// One row per superpixel.
inline std::string measures_csv(const MeasureSet& m) {
  std::string out =
      "id,len_shd,len_lit,area,con_shd,con_lit,gamma_shd,gamma_lit,Gamma_shd,Gamma_lit,"
      "pr_loc_shd,pr_loc_lit,pr_glb_shd,pr_glb_lit\n";
  for (int i = 0; i < m.size(); ++i) {
    out += std::to_string(i);
    for (const auto* col : {&m.len_shd, &m.len_lit, &m.area, &m.con_shd, &m.con_lit, &m.gamma_shd, &m.gamma_lit,
                            &m.Gamma_shd, &m.Gamma_lit, &m.pr_loc_shd, &m.pr_loc_lit, &m.pr_glb_shd, &m.pr_glb_lit})
      out += "," + format_number((*col)[i]);
    out += "\n";
  }
  return out;
}

}  // namespace shade
