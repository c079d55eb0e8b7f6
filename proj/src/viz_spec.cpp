#include "govq/viz_spec.hpp"

#include <set>

#include "govq/errors.hpp"

namespace govq {

std::string_view chart_type_name(ChartType t) {
  switch (t) {
    case ChartType::bar:
      return "bar";
    case ChartType::line:
      return "line";
    case ChartType::dot:
      return "dot";
    case ChartType::area:
      return "area";
    case ChartType::heatmap:
      return "heatmap";
    case ChartType::donut:
      return "donut";
  }
  return "bar";
}

std::optional<ChartType> parse_chart_type(std::string_view text) {
  if (text == "bar") return ChartType::bar;
  if (text == "line") return ChartType::line;
  if (text == "dot") return ChartType::dot;
  if (text == "area") return ChartType::area;
  if (text == "heatmap") return ChartType::heatmap;
  if (text == "donut") return ChartType::donut;
  return std::nullopt;
}

nlohmann::json to_json(const ChartConfig& c) {
  nlohmann::json marks = nlohmann::json::array();
  for (const Mark& m : c.marks) {
    nlohmann::json ch = nlohmann::json::object();
    if (m.channels.x) ch["x"] = *m.channels.x;
    if (m.channels.y) ch["y"] = *m.channels.y;
    if (m.channels.fill) ch["fill"] = *m.channels.fill;
    if (m.channels.size) ch["size"] = *m.channels.size;
    marks.push_back({{"type", chart_type_name(m.type)}, {"channels", std::move(ch)}});
  }
  nlohmann::json config = {{"title", c.title}, {"marks", std::move(marks)}};
  if (c.truncated) config["truncated"] = true;
  return {{"data", c.data}, {"config", std::move(config)}};
}

ChartConfig chart_from_json(const nlohmann::json& j) {
  try {
    ChartConfig c;
    for (const auto& row : j.at("data")) {
      if (!row.is_object()) throw ParseError("chart data rows must be objects");
      c.data.push_back(row);
    }
    const auto& config = j.at("config");
    c.title = config.value("title", std::string{});
    c.truncated = config.value("truncated", false);
    for (const auto& m : config.at("marks")) {
      Mark mark;
      const std::string type = m.at("type").get<std::string>();
      auto t = parse_chart_type(type);
      if (!t) throw ParseError("unknown mark type: " + type);
      mark.type = *t;
      const auto& ch = m.value("channels", nlohmann::json::object());
      auto opt = [&ch](const char* key) -> std::optional<std::string> {
        if (!ch.contains(key) || ch[key].is_null()) return std::nullopt;
        const std::string v = ch[key].get<std::string>();
        if (v.empty()) return std::nullopt;
        return v;
      };
      mark.channels = {opt("x"), opt("y"), opt("fill"), opt("size")};
      c.marks.push_back(std::move(mark));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed chart config: ") + e.what());
  }
}

bool channels_sound(const ChartConfig& c) {
  if (c.data.size() < kMinChartRows || c.marks.empty()) return false;
  for (const Mark& m : c.marks) {
    for (const auto* ch : {&m.channels.x, &m.channels.y, &m.channels.fill, &m.channels.size}) {
      if (!*ch) continue;
      for (const auto& row : c.data) {
        if (!row.contains(**ch)) return false;
      }
    }
  }
  return true;
}

namespace {

struct ColumnRoles {
  std::vector<std::size_t> temporal;
  std::vector<std::size_t> categorical;
  std::vector<std::size_t> numeric;
};

ColumnRoles classify(const TabularResult& r) {
  ColumnRoles roles;
  for (std::size_t i = 0; i < r.schema.size(); ++i) {
    const Column& c = r.schema[i];
    if (c.source == "key(target_id)") continue;
    if (c.temporal) {
      roles.temporal.push_back(i);
    } else if (c.type == ValueType::string) {
      roles.categorical.push_back(i);
    } else if (is_numeric(c.type) && !r.masked_columns.count(c.name)) {
      roles.numeric.push_back(i);
    }
  }
  return roles;
}

bool representable(const TabularResult& r, const ColumnRoles& roles, ChartType t) {
  if (r.rows.size() < kMinChartRows || roles.numeric.empty()) return false;
  const std::size_t axes = roles.temporal.size() + roles.categorical.size();
  switch (t) {
    case ChartType::line:
    case ChartType::area:
    case ChartType::dot:
    case ChartType::bar:
      return axes >= 1;
    case ChartType::donut:
      return !roles.categorical.empty();
    case ChartType::heatmap:
      return axes >= 2;
  }
  return false;
}

bool donut_shaped(const TabularResult& r, const ColumnRoles& roles) {
  if (r.provenance.endpoint != "aggregate_metrics") return false;
  const std::size_t cat = roles.categorical.front();
  const std::size_t num = roles.numeric.front();
  if (!r.schema[num].additive) return false;
  std::set<std::string> categories;
  for (const auto& row : r.rows) {
    const double* v = as_number(row[num]);
    if (v && *v < 0) return false;
    if (const std::string* s = as_string(row[cat])) categories.insert(*s);
  }
  return r.rows.size() <= kMaxDonutCategories && categories.size() <= kMaxDonutCategories;
}

}  // namespace

ChartDecision select_chart_type(const TabularResult& result, std::optional<ChartType> user_pref) {
  const ColumnRoles roles = classify(result);
  if (user_pref && representable(result, roles, *user_pref)) return *user_pref;
  if (result.rows.size() < kMinChartRows) {
    return Decline{"visualization needs 3+ rows, result has " + std::to_string(result.rows.size())};
  }
  if (roles.numeric.empty()) return Decline{"no unmasked numeric column to plot"};
  if (!roles.temporal.empty()) return ChartType::line;
  if (roles.categorical.size() == 1) {
    if (donut_shaped(result, roles)) return ChartType::donut;
    return ChartType::bar;
  }
  if (roles.categorical.size() == 2) return ChartType::heatmap;
  return Decline{"no chart type fits this result shape"};
}

ChartConfig build_chart_config(const TabularResult& result, ChartType type, const ChartContext& context) {
  if (result.rows.size() < kMinChartRows) throw ChannelError("chart needs at least 3 rows");
  const ColumnRoles roles = classify(result);
  if (roles.numeric.empty()) throw ChannelError("no unmasked numeric column available for the value channel");
  const std::string value = result.schema[roles.numeric.front()].name;

  std::vector<std::string> axes;
  for (std::size_t i : roles.temporal) axes.push_back(result.schema[i].name);
  for (std::size_t i : roles.categorical) axes.push_back(result.schema[i].name);
  const std::optional<std::string> first_cat =
      roles.categorical.empty() ? std::nullopt : std::optional(result.schema[roles.categorical.front()].name);

  Mark mark;
  mark.type = type;
  switch (type) {
    case ChartType::line:
    case ChartType::area:
    case ChartType::dot:
      if (axes.empty()) throw ChannelError("no column available for the x channel");
      mark.channels.x = axes.front();
      mark.channels.y = value;
      if (axes.size() > 1) mark.channels.fill = axes[1];
      break;
    case ChartType::bar:
      if (axes.empty()) throw ChannelError("no column available for the x channel");
      mark.channels.x = first_cat && roles.temporal.empty() ? *first_cat : axes.front();
      mark.channels.y = value;
      mark.channels.fill = first_cat;
      break;
    case ChartType::donut:
      if (!first_cat) throw ChannelError("donut needs a categorical column");
      mark.channels.y = value;
      mark.channels.fill = first_cat;
      break;
    case ChartType::heatmap:
      if (axes.size() < 2) throw ChannelError("heatmap needs two categorical columns");
      mark.channels.x = axes[0];
      mark.channels.y = axes[1];
      mark.channels.fill = value;
      break;
  }

  ChartConfig config;
  const std::size_t n = std::min(result.rows.size(), kMaxChartPoints);
  config.truncated = result.rows.size() > kMaxChartPoints;
  for (std::size_t r = 0; r < n; ++r) {
    nlohmann::json row = nlohmann::json::object();
    for (std::size_t c = 0; c < result.schema.size(); ++c) row[result.schema[c].name] = cell_to_json(result.rows[r][c]);
    config.data.push_back(std::move(row));
  }

  std::string title = context.metric_label.empty() ? value : context.metric_label;
  const std::optional<std::string>& by = type == ChartType::donut ? mark.channels.fill : mark.channels.x;
  if (by) title += " by " + *by;
  if (!context.scope.empty()) title += " for " + context.scope;
  if (!context.window.empty()) title += ", " + context.window;
  config.title = std::move(title);
  config.marks.push_back(std::move(mark));
  return config;
}

const std::string& PseudonymTable::assign(const std::string& key) {
  auto it = labels_.find(key);
  if (it != labels_.end()) return it->second;
  return labels_.emplace(key, "Group " + std::to_string(labels_.size() + 1)).first->second;
}

nlohmann::json PseudonymTable::to_json() const { return labels_; }

PseudonymTable PseudonymTable::from_json(const nlohmann::json& j) {
  PseudonymTable t;
  if (j.is_object()) t.labels_ = j.get<std::map<std::string, std::string>>();
  return t;
}

ChartConfig apply_chart_masking(ChartConfig config, const TabularResult& result, PseudonymTable& pseudonyms) {
  for (const std::string& col : result.masked_columns) {
    const auto idx = result.column_index(col);
    if (!idx || result.schema[*idx].type != ValueType::string) continue;
    const auto keys = result.mask_keys.find(col);
    for (std::size_t r = 0; r < config.data.size(); ++r) {
      auto& row = config.data[r];
      if (!row.contains(col)) continue;
      std::string key;
      if (keys != result.mask_keys.end() && r < keys->second.size()) {
        key = keys->second[r];
      } else {
        key = result.provenance.request_id + ":" + col + ":" + std::to_string(r);
      }
      row[col] = pseudonyms.assign(key);
    }
  }
  return config;
}

}  // namespace govq
