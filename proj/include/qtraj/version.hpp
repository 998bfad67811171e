#pragma once

#define QTRAJ_VERSION "1.0.0"
