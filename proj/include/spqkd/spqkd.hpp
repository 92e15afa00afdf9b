#ifndef SPQKD_SPQKD_HPP
#define SPQKD_SPQKD_HPP

#include "spqkd/calibrate.hpp"
#include "spqkd/config.hpp"
#include "spqkd/errors.hpp"
#include "spqkd/photonics.hpp"
#include "spqkd/protocol.hpp"
#include "spqkd/report.hpp"
#include "spqkd/rng.hpp"
#include "spqkd/security.hpp"
#include "spqkd/session.hpp"
#include "spqkd/time_tags.hpp"
#include "spqkd/timetag.hpp"

#endif
