#include <algorithm>
#include <map>

#include "govq/analytics_store.hpp"
#include "govq/errors.hpp"
#include "govq/util.hpp"

namespace govq {

namespace {

bool filter_accepts(const Cell& v, const FilterClause& f) {
  if (is_null(v)) return false;
  switch (f.op) {
    case FilterOp::eq:
    case FilterOp::in:
      return std::find(f.values.begin(), f.values.end(), v) != f.values.end();
    case FilterOp::gte:
      return v.index() == f.values.front().index() && !(v < f.values.front());
    case FilterOp::lt:
      return v.index() == f.values.front().index() && v < f.values.front();
  }
  return false;
}

// Running state for one select expression within one group.
struct Accumulator {
  double count = 0;
  double sum = 0;
  std::optional<double> min;
  std::optional<double> max;
  double matched = 0;
};

struct SelectPlan {
  const SelectExpr* expr = nullptr;
  const MetricDef* metric = nullptr;
};

void accumulate(Accumulator& acc, const SelectPlan& plan, const InteractionRecord& r, const OrgIndex& org) {
  if (plan.metric) {
    const MetricDef& m = *plan.metric;
    for (const Condition& c : m.where) {
      if (!matches(r, c, org)) return;
    }
    switch (m.op) {
      case MetricDef::Op::count:
        acc.count += 1;
        return;
      case MetricDef::Op::mean: {
        const Cell value = field_value(r, m.value_field, org);
        if (const double* v = as_number(value)) {
          acc.count += 1;
          acc.sum += *v;
        }
        return;
      }
      case MetricDef::Op::ratio: {
        acc.count += 1;
        bool hit = true;
        for (const Condition& c : m.numerator) hit = hit && matches(r, c, org);
        if (hit) acc.matched += 1;
        return;
      }
    }
    return;
  }
  const auto* agg = std::get_if<ParamAgg>(&plan.expr->source);
  if (!agg) return;
  if (agg->field == "*") {
    acc.count += 1;
    return;
  }
  const Cell v = field_value(r, agg->field, org);
  if (is_null(v)) return;
  acc.count += 1;
  if (const double* d = as_number(v)) {
    acc.sum += *d;
    acc.min = acc.min ? std::min(*acc.min, *d) : *d;
    acc.max = acc.max ? std::max(*acc.max, *d) : *d;
  }
}

Cell finish(const Accumulator& acc, const SelectPlan& plan) {
  if (plan.metric) {
    switch (plan.metric->op) {
      case MetricDef::Op::count:
        return acc.count;
      case MetricDef::Op::mean:
        if (acc.count == 0) return std::monostate{};
        return acc.sum / acc.count;
      case MetricDef::Op::ratio:
        if (acc.count == 0) return std::monostate{};
        return acc.matched / acc.count;
    }
  }
  const auto& agg = std::get<ParamAgg>(plan.expr->source);
  switch (agg.fn) {
    case AggFn::count:
      return acc.count;
    case AggFn::sum:
      return acc.sum;
    case AggFn::avg:
      if (acc.count == 0) return std::monostate{};
      return acc.sum / acc.count;
    case AggFn::min:
      if (!acc.min) return std::monostate{};
      return *acc.min;
    case AggFn::max:
      if (!acc.max) return std::monostate{};
      return *acc.max;
  }
  return std::monostate{};
}

Column select_column(const SelectExpr& s, const Catalog& catalog) {
  Column c;
  c.name = s.output_alias;
  c.source = s.source_key();
  if (const auto* col = std::get_if<ColumnRef>(&s.source)) {
    const FieldDef* f = catalog.find(col->field);
    c.type = f ? f->value_type : ValueType::string;
  } else if (const auto* comp = std::get_if<ComputedRef>(&s.source)) {
    const FieldDef* f = catalog.find(comp->name);
    c.type = f ? f->value_type : ValueType::number;
    const MetricDef* m = find_metric(comp->name);
    c.additive = m && m->op == MetricDef::Op::count;
  } else {
    const auto& agg = std::get<ParamAgg>(s.source);
    if (agg.fn == AggFn::count) {
      c.type = ValueType::number;
      c.additive = true;
    } else {
      const FieldDef* f = catalog.find(agg.field);
      c.type = f ? f->value_type : ValueType::number;
      c.additive = agg.fn == AggFn::sum;
    }
  }
  return c;
}

// Nulls sort last in either direction.
bool cell_before(const Cell& a, const Cell& b, SortDir dir) {
  if (is_null(a) || is_null(b)) return !is_null(a) && is_null(b);
  return dir == SortDir::asc ? a < b : b < a;
}

void apply_order(TabularResult& out, const std::vector<OrderBy>& order_by) {
  std::vector<std::pair<std::size_t, SortDir>> keys;
  for (const OrderBy& o : order_by) {
    if (auto idx = out.column_index(o.alias)) keys.emplace_back(*idx, o.dir);
  }
  if (keys.empty()) return;
  std::stable_sort(out.rows.begin(), out.rows.end(), [&](const auto& a, const auto& b) {
    for (const auto& [idx, dir] : keys) {
      if (cell_before(a[idx], b[idx], dir)) return true;
      if (cell_before(b[idx], a[idx], dir)) return false;
    }
    return false;
  });
}

class Executor {
 public:
  Executor(const ValidatedRequest& req, const Principal& principal, const Dataset& ds, const ExecuteOptions& opts)
      : req_(req), principal_(principal), ds_(ds), opts_(opts) {}

  TabularResult run() {
    authorize();
    collect();
    TabularResult out;
    switch (req_.endpoint) {
      case Endpoint::aggregate_metrics:
      case Endpoint::timeseries:
        out = grouped();
        break;
      case Endpoint::leaderboard:
        out = leaderboard();
        break;
      case Endpoint::records:
        out = records();
        break;
    }
    out.provenance = {std::string(endpoint_name(req_.endpoint)), req_.request_id()};
    if (!principal_.unmasked()) out = mask_result(std::move(out), ds_.catalog, ds_.tenant_id);
    return out;
  }

 private:
  void authorize() {
    if (principal_.tenant_id != ds_.tenant_id) throw PermissionError("principal belongs to another tenant");
    for (const std::string& t : req_.targets) {
      if (!ds_.org.find(t) || !principal_.permits(t)) {
        throw PermissionError("target " + t + " is outside the permitted scope");
      }
    }
    if (req_.targets.empty()) {
      scope_ = principal_.permitted_target_ids;
    } else {
      for (const std::string& t : req_.targets) {
        for (const std::string& id : ds_.org.subtree(t)) {
          if (principal_.permits(id)) scope_.insert(id);
        }
      }
    }
  }

  void collect() {
    const auto lo = dates::range_start(req_.date_range);
    const auto hi = dates::range_end(req_.date_range);
    for (const InteractionRecord& r : ds_.records) {
      if (r.occurred_at < lo || r.occurred_at >= hi) continue;
      if (!scope_.count(r.target_id)) continue;
      bool keep = true;
      for (const FilterClause& f : req_.filters) {
        if (!filter_accepts(field_value(r, f.field, ds_.org), f)) {
          keep = false;
          break;
        }
      }
      if (keep) rows_.push_back(&r);
    }
  }

  std::vector<SelectPlan> aggregate_plans() const {
    std::vector<SelectPlan> plans;
    for (const SelectExpr& s : req_.select) {
      if (std::holds_alternative<ColumnRef>(s.source)) continue;
      SelectPlan p{&s, nullptr};
      if (const auto* comp = std::get_if<ComputedRef>(&s.source)) {
        p.metric = find_metric(comp->name);
        if (!p.metric) throw EndpointError("no definition for computed field " + comp->name, false);
      }
      plans.push_back(p);
    }
    return plans;
  }

  Cell group_value(const InteractionRecord& r, const GroupByKey& k) const {
    if (const auto* g = std::get_if<TimeGrain>(&k)) return dates::bucket(r.occurred_at, g->grain, req_.date_range.tz);
    return field_value(r, std::get<Dimension>(k).field, ds_.org);
  }

  TabularResult grouped() {
    TabularResult out;
    for (const GroupByKey& k : req_.group_by) {
      Column c;
      c.name = group_key_name(k);
      c.source = "group(" + c.name + ")";
      if (const auto* d = std::get_if<Dimension>(&k)) {
        const FieldDef* f = ds_.catalog.find(d->field);
        c.type = f ? f->value_type : ValueType::string;
        for (const SelectExpr& s : req_.select) {
          const auto* col = std::get_if<ColumnRef>(&s.source);
          if (col && col->field == d->field) c.name = s.output_alias;
        }
      } else {
        c.type = ValueType::string;
        c.temporal = true;
      }
      out.schema.push_back(std::move(c));
    }
    const auto plans = aggregate_plans();
    for (const SelectPlan& p : plans) out.schema.push_back(select_column(*p.expr, ds_.catalog));

    std::map<std::vector<Cell>, std::vector<Accumulator>> groups;
    for (const InteractionRecord* r : rows_) {
      std::vector<Cell> key;
      key.reserve(req_.group_by.size());
      for (const GroupByKey& k : req_.group_by) key.push_back(group_value(*r, k));
      auto& accs = groups.try_emplace(std::move(key), plans.size()).first->second;
      for (std::size_t i = 0; i < plans.size(); ++i) accumulate(accs[i], plans[i], *r, ds_.org);
    }
    if (req_.endpoint == Endpoint::aggregate_metrics && req_.group_by.empty() && groups.empty()) {
      groups.try_emplace({}, plans.size());
    }
    if (req_.endpoint == Endpoint::timeseries) fill_empty_buckets(groups, plans.size());

    for (const auto& [key, accs] : groups) {
      std::vector<Cell> row = key;
      for (std::size_t i = 0; i < plans.size(); ++i) row.push_back(finish(accs[i], plans[i]));
      out.rows.push_back(std::move(row));
    }
    apply_order(out, req_.order_by);
    return out;
  }

  void fill_empty_buckets(std::map<std::vector<Cell>, std::vector<Accumulator>>& groups, std::size_t n) const {
    std::size_t grain_pos = 0;
    dates::Grain grain = dates::Grain::day;
    for (std::size_t i = 0; i < req_.group_by.size(); ++i) {
      if (const auto* g = std::get_if<TimeGrain>(&req_.group_by[i])) {
        grain_pos = i;
        grain = g->grain;
      }
    }
    std::set<std::vector<Cell>> combos;
    for (const auto& [key, _] : groups) {
      std::vector<Cell> rest = key;
      rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(grain_pos));
      combos.insert(std::move(rest));
    }
    if (combos.empty() && req_.group_by.size() == 1) combos.insert(std::vector<Cell>{});
    for (const std::string& label : dates::bucket_labels(req_.date_range, grain)) {
      for (const auto& rest : combos) {
        std::vector<Cell> key = rest;
        key.insert(key.begin() + static_cast<std::ptrdiff_t>(grain_pos), Cell{label});
        groups.try_emplace(std::move(key), n);
      }
    }
  }

  TabularResult leaderboard() {
    TabularResult out;
    out.schema.push_back({"target_id", ValueType::string, "key(target_id)", false, false});
    out.schema.push_back({"target_name", ValueType::string, "key(target_name)", false, false});
    const auto plans = aggregate_plans();
    for (const SelectPlan& p : plans) out.schema.push_back(select_column(*p.expr, ds_.catalog));

    std::vector<std::string> entrants = req_.targets;
    if (entrants.empty()) {
      for (const std::string& id : principal_.permitted_target_ids) {
        if (ds_.org.is_leaf(id)) entrants.push_back(id);
      }
    }
    std::map<std::string, std::string> owner;
    for (const std::string& t : entrants) {
      for (const std::string& id : ds_.org.subtree(t)) owner.emplace(id, t);
    }
    std::map<std::string, std::vector<Accumulator>> per_target;
    for (const std::string& t : entrants) per_target.try_emplace(t, plans.size());
    for (const InteractionRecord* r : rows_) {
      // a record counts once, toward the first listed entrant that contains it
      auto it = owner.find(r->target_id);
      if (it == owner.end()) continue;
      auto& accs = per_target.at(it->second);
      for (std::size_t i = 0; i < plans.size(); ++i) accumulate(accs[i], plans[i], *r, ds_.org);
    }
    for (const auto& [id, accs] : per_target) {
      std::vector<Cell> row = {id, ds_.org.find(id)->name};
      for (std::size_t i = 0; i < plans.size(); ++i) row.push_back(finish(accs[i], plans[i]));
      out.rows.push_back(std::move(row));
    }
    std::sort(out.rows.begin(), out.rows.end(),
              [](const auto& a, const auto& b) { return std::tie(a[1], a[0]) < std::tie(b[1], b[0]); });
    std::vector<OrderBy> order = req_.order_by;
    if (order.empty()) {
      for (std::size_t i = 2; i < out.schema.size(); ++i) {
        if (is_numeric(out.schema[i].type)) {
          order.push_back({out.schema[i].name, SortDir::desc});
          break;
        }
      }
    }
    if (order.size() > 1) order.resize(1);
    apply_order(out, order);
    return out;
  }

  TabularResult records() {
    TabularResult out;
    std::vector<std::string> fields;
    for (const SelectExpr& s : req_.select) {
      out.schema.push_back(select_column(s, ds_.catalog));
      fields.push_back(std::get<ColumnRef>(s.source).field);
    }
    std::vector<const InteractionRecord*> sorted = rows_;
    std::sort(sorted.begin(), sorted.end(), [](const InteractionRecord* a, const InteractionRecord* b) {
      if (a->occurred_at != b->occurred_at) return a->occurred_at > b->occurred_at;
      return a->record_id > b->record_id;
    });
    for (const InteractionRecord* r : sorted) {
      std::vector<Cell> row;
      row.reserve(fields.size());
      for (const std::string& f : fields) row.push_back(field_value(*r, f, ds_.org));
      out.rows.push_back(std::move(row));
    }
    apply_order(out, req_.order_by);
    if (out.rows.size() > opts_.record_limit) {
      out.rows.resize(opts_.record_limit);
      out.truncated = true;
    }
    return out;
  }

  const ValidatedRequest& req_;
  const Principal& principal_;
  const Dataset& ds_;
  const ExecuteOptions& opts_;
  std::set<std::string> scope_;
  std::vector<const InteractionRecord*> rows_;
};

}  // namespace

TabularResult execute(const ValidatedRequest& request, const Principal& principal, const Dataset& dataset,
                      const ExecuteOptions& options) {
  return Executor(request, principal, dataset, options).run();
}

std::string source_field(std::string_view source) {
  const auto open = source.find('(');
  const auto close = source.rfind(')');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) return std::string(source);
  return std::string(source.substr(open + 1, close - open - 1));
}

TabularResult mask_result(TabularResult result, const Catalog& catalog, std::string_view tenant_id) {
  for (std::size_t c = 0; c < result.schema.size(); ++c) {
    const Column& col = result.schema[c];
    const FieldDef* f = catalog.find(source_field(col.source));
    if (!f || !f->maskable) continue;
    result.masked_columns.insert(col.name);
    if (col.type == ValueType::string) {
      auto [it, fresh] = result.mask_keys.try_emplace(col.name);
      for (auto& row : result.rows) {
        if (fresh) {
          const std::string* s = as_string(row[c]);
          it->second.push_back(util::hash_hex("mask:" + std::string(tenant_id) + ":" + f->name + ":" + (s ? *s : "")));
        }
        if (!is_null(row[c])) row[c] = std::string(kMaskSentinel);
      }
    } else {
      for (auto& row : result.rows) row[c] = std::monostate{};
    }
  }
  return result;
}

}  // namespace govq
