#pragma once

#include "vigpi/tables.hpp"
#include "vigpi/mdp.hpp"
#include "vigpi/bellman.hpp"
#include "vigpi/expectile.hpp"
#include "vigpi/operators.hpp"
#include "vigpi/engine.hpp"
#include "vigpi/instances.hpp"
#include "vigpi/verification.hpp"
#include "vigpi/io.hpp"
#include "vigpi/cli.hpp"
