#pragma once

// Federated open-set recognition toolkit: FedAvg training of a small
// classifier, a privacy-preserving federated OpenMax calibration exchange,
// and open-set inference with unknown-class rejection.

#include "fosr/classifier.hpp"
#include "fosr/dataset.hpp"
#include "fosr/error.hpp"
#include "fosr/evaluation.hpp"
#include "fosr/experiment.hpp"
#include "fosr/federation.hpp"
#include "fosr/message.hpp"
#include "fosr/numerics.hpp"
#include "fosr/openmax.hpp"
#include "fosr/random.hpp"
#include "fosr/serialization.hpp"
#include "fosr/socket_transport.hpp"
#include "fosr/transport.hpp"
#include "fosr/weibull.hpp"
