// SPDX-License-Identifier: Apache-2.0
#pragma once

// JSON shapes shared by the worker protocol, the client API and the CLI.

#include "trainscan/eventstore.hpp"
#include "trainscan/pipeline.hpp"
#include "trainscan/scheduler.hpp"

#include <json.hpp>

namespace trainscan::codec {

using nlohmann::json;

json to_json(const store::EventRecord& e);
store::EventRecord event_from_json(const json& j);

json to_json(const pipeline::FeatureRow& r);
pipeline::FeatureRow feature_row_from_json(const json& j);

json to_json(const sched::WorkUnit& u);
sched::WorkUnit unit_from_json(const json& j);

json to_json(const TimeSpan& s);
TimeSpan span_from_json(const json& j);

json to_json(const sched::JobStatus& s);

} // namespace trainscan::codec
