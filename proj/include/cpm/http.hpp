#pragma once

// JSON-over-HTTP binding of MarketService.
//
//   GET  /market                  variables, cliques, separators, treewidth, b
//   GET  /marginals?vars=A,B      per-variable marginals (all when omitted)
//   POST /users                   {"id": ...}
//   GET  /users/{id}/assets       expected score, min score, min states
//   POST /users/{id}/preview      {"target","state","assumptions"}
//   POST /users/{id}/trades       {"target","state","assumptions","value","token"}
//   GET  /trades?since=N          ledger records with seq > N
//
// Busy answers 503; validation failures 409/422; unknown names 404.

#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "cpm/service.hpp"

namespace cpm::http {

using nlohmann::json;

inline int status_for(Errc code) {
  switch (code) {
    case Errc::busy: return 503;
    case Errc::unknown_user: return 404;
    case Errc::duplicate_user: return 409;
    case Errc::out_of_limits: return 409;
    case Errc::syntax:
    case Errc::invalid_argument: return 400;
    case Errc::storage: return 500;
    default: return 422;
  }
}

inline json error_body(Errc code, const std::string& message) {
  return {{"error", std::string(to_string(code))}, {"message", message}};
}

inline json names_of(const BayesNet& net, const std::vector<VarId>& vars) {
  json out = json::array();
  for (VarId v : vars) out.push_back(net.variables[v].name);
  return out;
}

inline json market_json(const MarketState& state) {
  const auto& net = state.model->net;
  const auto& jt = *state.model->jt;
  json j;
  j["variables"] = json::array();
  for (const auto& v : net.variables) j["variables"].push_back({{"name", v.name}, {"states", v.states}});
  j["cliques"] = json::array();
  for (const auto& c : jt.cliques) j["cliques"].push_back(names_of(net, c.vars));
  j["separators"] = json::array();
  for (const auto& s : jt.separators)
    j["separators"].push_back({{"cliques", {s.a, s.b}}, {"variables", names_of(net, s.domain.vars)}});
  j["treewidth"] = jt.treewidth;
  j["b"] = state.model->config.lmsr_scale;
  j["initial_q"] = state.model->config.initial_q;
  j["last_seq"] = state.last_seq;
  return j;
}

inline json min_states_json(const MarketState& state, const MinResult& m) {
  const auto& net = state.model->net;
  json states = json::array();
  for (const auto& assignment : m.argmins) {
    json row = json::object();
    for (VarId v = 0; v < assignment.size(); ++v) row[net.variables[v].name] = net.variables[v].states[assignment[v]];
    states.push_back(std::move(row));
  }
  return states;
}

inline json assets_json(const MarketState& state, const std::string& uid) {
  const auto m = min_assets(state, uid);
  return {{"user", uid},
          {"expected_score", expected_assets(state, uid)},
          {"min_q", m.value},
          {"min_score", state.score(m.value)},
          {"min_states", min_states_json(state, m)},
          {"truncated", m.truncated}};
}

inline json limits_json(const EditLimits& l) {
  return {{"lower", l.lower}, {"upper", l.upper}, {"m_t", l.m_t}, {"m_not_t", l.m_not_t}, {"current", l.current}};
}

inline json preview_json(const TradePreview& p) {
  return {{"current_conditional", p.current_conditional},
          {"limits", limits_json(p.limits)},
          {"exp_score_if_true", p.exp_score_if_true},
          {"exp_score_if_false", p.exp_score_if_false},
          {"position", std::string(to_string(p.position))}};
}

inline json outcome_json(const MarketState& state, const TradeOutcome& o) {
  return {{"record", to_json(o.record)},
          {"marginals", o.marginals},
          {"expected_score", o.expected_assets},
          {"min_q", o.min_q},
          {"min_score", state.score(o.min_q)},
          {"min_states", min_states_json(state, o.min_states)},
          {"truncated", o.min_states.truncated},
          {"lock_seconds", o.lock_seconds}};
}

inline Edit edit_from_json(const json& body) {
  Edit e;
  e.target = body.at("target").get<std::string>();
  e.state = body.at("state").get<std::string>();
  if (body.contains("assumptions")) e.assumptions = body.at("assumptions").get<std::map<std::string, std::string>>();
  return e;
}

namespace detail {

inline void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

// Runs `fn`, mapping engine and parse errors to JSON error responses.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    reply(res, status_for(e.code()), error_body(e.code(), e.what()));
  } catch (const json::exception& e) {
    reply(res, 400, error_body(Errc::syntax, e.what()));
  }
}

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto comma = s.find(',', start);
    if (comma == std::string::npos) comma = s.size();
    if (comma > start) out.push_back(s.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

}  // namespace detail

inline void bind(httplib::Server& server, MarketService& service) {
  using detail::guarded;
  using detail::reply;

  server.Get("/market", [&](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, market_json(*service.snapshot())); });
  });

  server.Get("/marginals", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto state = service.snapshot();
      json out = json::object();
      if (req.has_param("vars")) {
        for (const auto& name : detail::split_csv(req.get_param_value("vars")))
          out[name] = marginal(*state, name).values;
      } else {
        out = all_marginals(*state);
      }
      reply(res, 200, {{"last_seq", state->last_seq}, {"marginals", out}});
    });
  });

  server.Post("/users", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto id = json::parse(req.body).at("id").get<std::string>();
      service.register_user(id);
      reply(res, 201, {{"id", id}});
    });
  });

  server.Get(R"(/users/([^/]+)/assets)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, assets_json(*service.snapshot(), req.matches[1])); });
  });

  server.Post(R"(/users/([^/]+)/preview)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto edit = edit_from_json(json::parse(req.body));
      reply(res, 200, preview_json(preview_trade(*service.snapshot(), req.matches[1], edit)));
    });
  });

  server.Post(R"(/users/([^/]+)/trades)", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = json::parse(req.body);
      EditSubmission sub;
      sub.user = req.matches[1];
      sub.edit = edit_from_json(body);
      sub.value = body.at("value").get<double>();
      sub.token = body.value("token", "");
      const auto result = service.submit_edit(sub);
      if (!result.accepted) {
        reply(res, status_for(result.reason), error_body(result.reason, result.message));
        return;
      }
      auto out = outcome_json(*service.snapshot(), *result.outcome);
      out["duplicate"] = result.duplicate;
      reply(res, 200, out);
    });
  });

  server.Get("/trades", [&](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::uint64_t since = 0;
      if (req.has_param("since")) {
        try {
          since = std::stoull(req.get_param_value("since"));
        } catch (const std::exception&) {
          throw Error(Errc::invalid_argument, "since must be a non-negative integer");
        }
      }
      json trades = json::array();
      for (const auto& r : service.trades_since(since)) trades.push_back(to_json(r));
      reply(res, 200, {{"trades", trades}});
    });
  });
}

}  // namespace cpm::http
