#pragma once

#include "monodense/config.hpp"
#include "monodense/cost_volume.hpp"
#include "monodense/depth_filter.hpp"
#include "monodense/eval.hpp"
#include "monodense/geometry.hpp"
#include "monodense/image.hpp"
#include "monodense/marching_cubes.hpp"
#include "monodense/mesh.hpp"
#include "monodense/pipeline.hpp"
#include "monodense/png_io.hpp"
#include "monodense/synthetic.hpp"
#include "monodense/tsdf_volume.hpp"
#include "monodense/tum_dataset.hpp"
