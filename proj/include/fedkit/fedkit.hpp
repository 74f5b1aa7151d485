#pragma once

// Everything except the Boost-based hub daemon (fedkit/hub/server.hpp,
// fedkit/hub/tcp_transport.hpp), which pulls in Beast and Asio.

#include "fedkit/cli/artifacts.hpp"
#include "fedkit/cli/commands.hpp"
#include "fedkit/cli/compare.hpp"
#include "fedkit/experiment/parse.hpp"
#include "fedkit/experiment/sites.hpp"
#include "fedkit/experiment/stage_machine.hpp"
#include "fedkit/experiment/validate.hpp"
#include "fedkit/hub/hub.hpp"
#include "fedkit/hub/remote_participant.hpp"
#include "fedkit/hub/site_gateway.hpp"
#include "fedkit/model/json_io.hpp"
#include "fedkit/model/mapping.hpp"
#include "fedkit/netem/link.hpp"
#include "fedkit/plant/factory.hpp"
#include "fedkit/plant/itm.hpp"
#include "fedkit/plant/oracle.hpp"
#include "fedkit/sync/causality.hpp"
#include "fedkit/sync/runner.hpp"
