#pragma once

#include "bsssqs/bytes.hpp"
#include "bsssqs/chain.hpp"
#include "bsssqs/crypto.hpp"
#include "bsssqs/master.hpp"
#include "bsssqs/minion.hpp"
#include "bsssqs/netsim.hpp"
#include "bsssqs/qcloud.hpp"
#include "bsssqs/question.hpp"
#include "bsssqs/rng.hpp"
#include "bsssqs/scenario.hpp"
#include "bsssqs/submission.hpp"
