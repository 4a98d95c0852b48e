#ifndef FRAMEBAYES_TIMESERIES_HPP
#define FRAMEBAYES_TIMESERIES_HPP

#include <Eigen/Dense>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "framebayes/errors.hpp"

namespace framebayes {

/// A set of equally sampled named channels sharing one time axis.
struct ChannelSet {
  double dt = 0.0;
  std::vector<std::string> names;
  Eigen::MatrixXd data;  // one row per channel, one column per sample

  int n_channels() const { return static_cast<int>(names.size()); }
  Eigen::Index n_samples() const { return data.cols(); }

  bool has_channel(const std::string& name) const {
    for (const auto& n : names)
      if (n == name) return true;
    return false;
  }

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return static_cast<int>(i);
    throw ConfigError("unknown channel '" + name + "'");
  }

  Eigen::VectorXd channel(const std::string& name) const {
    return data.row(index_of(name)).transpose();
  }

  // Rows of `data` for a list of channel names, in the given order.
  Eigen::MatrixXd rows(const std::vector<std::string>& which) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(which.size()), data.cols());
    for (std::size_t i = 0; i < which.size(); ++i)
      out.row(static_cast<Eigen::Index>(i)) = data.row(index_of(which[i]));
    return out;
  }
};

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// CSV layout: optional leading '#' comment lines, a header row
// "time,<name>,...", then one row per sample.
inline void write_channels_csv(const std::string& path, const ChannelSet& set,
                               const std::vector<std::string>& comments = {}) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  for (const auto& c : comments) out << "# " << c << "\n";
  out << "time";
  for (const auto& n : set.names) out << "," << n;
  out << "\n";
  for (Eigen::Index j = 0; j < set.n_samples(); ++j) {
    out << format_double(static_cast<double>(j) * set.dt);
    for (int i = 0; i < set.n_channels(); ++i) out << "," << format_double(set.data(i, j));
    out << "\n";
  }
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

inline ChannelSet read_channels_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::string line;
  // skip comments
  do {
    if (!std::getline(in, line)) throw ConfigError("'" + path + "': empty file");
  } while (!line.empty() && line[0] == '#');

  ChannelSet set;
  {
    std::stringstream header(line);
    std::string cell;
    bool first = true;
    while (std::getline(header, cell, ',')) {
      if (first) {
        if (cell != "time") throw ConfigError("'" + path + "': first column must be 'time'");
        first = false;
      } else {
        set.names.push_back(cell);
      }
    }
  }
  std::vector<double> times;
  std::vector<std::vector<double>> cols(set.names.size());
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream row(line);
    std::string cell;
    std::size_t k = 0;
    while (std::getline(row, cell, ',')) {
      double v = std::stod(cell);
      if (k == 0)
        times.push_back(v);
      else if (k - 1 < cols.size())
        cols[k - 1].push_back(v);
      ++k;
    }
    if (k != set.names.size() + 1)
      throw ConfigError("'" + path + "': ragged row with " + std::to_string(k) + " cells");
  }
  if (times.size() < 2) throw ConfigError("'" + path + "': need at least two samples");
  set.dt = times[1] - times[0];
  set.data.resize(static_cast<Eigen::Index>(set.names.size()),
                  static_cast<Eigen::Index>(times.size()));
  for (std::size_t i = 0; i < cols.size(); ++i)
    for (std::size_t j = 0; j < times.size(); ++j)
      set.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cols[i][j];
  return set;
}

}  // namespace framebayes

#endif
