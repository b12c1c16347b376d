#pragma once

#define DLAP_VERSION_STRING "0.1.0"
