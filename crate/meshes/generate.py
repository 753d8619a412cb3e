"""Regenerate the fixture meshes in this directory (MSH 2.2 ASCII).

Requires the gmsh Python module. Physical tags:
  1 inflow, 2 wall, 3 outflow, 4 obstacle, 5 fluid surface, 6 obstacle interior
"""
import math
import sys

import gmsh

L, H = 7.0, 3.0


def tunnel(name, obstacle, h_near, h_far, dist_max, holdall=False, tip_refine=None):
    gmsh.initialize()
    gmsh.option.setNumber("General.Terminal", 0)
    gmsh.model.add(name)
    occ = gmsh.model.occ
    box = occ.addRectangle(-L, -H, 0, 2 * L, 2 * H)
    obs = obstacle(occ)
    if holdall:
        out, _ = occ.fragment([(2, box)], [(2, obs)])
    else:
        out, _ = occ.cut([(2, box)], [(2, obs)])
    occ.synchronize()

    surfaces = [t for d, t in gmsh.model.getEntities(2)]
    fluid, solid = [], []
    for s in surfaces:
        com = occ.getCenterOfMass(2, s)
        bb = gmsh.model.getBoundingBox(2, s)
        if bb[3] - bb[0] > 2 * L - 1e-6:
            fluid.append(s)
        else:
            solid.append(s)

    inflow, wall, outflow, obstacle_curves = [], [], [], []
    for d, c in gmsh.model.getEntities(1):
        x0, y0, _, x1, y1, _ = gmsh.model.getBoundingBox(1, c)
        if abs(x0 + L) < 1e-6 and abs(x1 + L) < 1e-6:
            inflow.append(c)
        elif abs(x0 - L) < 1e-6 and abs(x1 - L) < 1e-6:
            outflow.append(c)
        elif abs(abs(y0) - H) < 1e-6 and abs(abs(y1) - H) < 1e-6:
            wall.append(c)
        else:
            obstacle_curves.append(c)

    gmsh.model.addPhysicalGroup(1, inflow, 1, "inflow")
    gmsh.model.addPhysicalGroup(1, wall, 2, "wall")
    gmsh.model.addPhysicalGroup(1, outflow, 3, "outflow")
    gmsh.model.addPhysicalGroup(1, obstacle_curves, 4, "obstacle")
    gmsh.model.addPhysicalGroup(2, fluid, 5, "fluid")
    if holdall:
        gmsh.model.addPhysicalGroup(2, solid, 6, "solid")

    f = gmsh.model.mesh.field
    dist = f.add("Distance")
    f.setNumbers(dist, "CurvesList", obstacle_curves)
    f.setNumber(dist, "Sampling", 400)
    thr = f.add("Threshold")
    f.setNumber(thr, "InField", dist)
    f.setNumber(thr, "SizeMin", h_near)
    f.setNumber(thr, "SizeMax", h_far)
    f.setNumber(thr, "DistMin", 0.0)
    f.setNumber(thr, "DistMax", dist_max)
    fields = [thr]
    if tip_refine is not None:
        pts, h_tip, r_tip = tip_refine
        for (px, py) in pts:
            b = f.add("Ball")
            f.setNumber(b, "XCenter", px)
            f.setNumber(b, "YCenter", py)
            f.setNumber(b, "Radius", r_tip)
            f.setNumber(b, "VIn", h_tip)
            f.setNumber(b, "VOut", h_far)
            fields.append(b)
    mn = f.add("Min")
    f.setNumbers(mn, "FieldsList", fields)
    f.setAsBackgroundMesh(mn)
    gmsh.option.setNumber("Mesh.MeshSizeExtendFromBoundary", 0)
    gmsh.option.setNumber("Mesh.MeshSizeFromPoints", 0)
    gmsh.option.setNumber("Mesh.MeshSizeFromCurvature", 0)
    gmsh.option.setNumber("Mesh.Algorithm", 5)

    gmsh.model.mesh.generate(2)
    gmsh.option.setNumber("Mesh.MshFileVersion", 2.2)
    gmsh.option.setNumber("Mesh.Binary", 0)
    gmsh.write(name + ".msh")

    ntri = 0
    for s in surfaces:
        types, tags, _ = gmsh.model.mesh.getElements(2, s)
        ntri += sum(len(t) for t in tags)
    nseg = 0
    for c in obstacle_curves:
        types, tags, _ = gmsh.model.mesh.getElements(1, c)
        nseg += sum(len(t) for t in tags)
    nodes, _, _ = gmsh.model.mesh.getNodes()
    print(f"{name}: nodes={len(nodes)} triangles={ntri} obstacle_segments={nseg}")
    gmsh.finalize()


def circle(occ):
    return occ.addDisk(0, 0, 0, 0.5, 0.5)


def ellipse(occ):
    return occ.addDisk(0, 0, 0, 2.7, 0.2)


if __name__ == "__main__":
    which = sys.argv[1:] or ["circle_2k", "circle_6k", "circle_12k", "ellipse_holdall"]
    if "circle_2k" in which:
        tunnel("circle_2k", circle, 0.05, 0.55, 3.0)
    if "circle_6k" in which:
        tunnel("circle_6k", circle, 0.01, 0.5, 2.2)
    if "circle_12k" in which:
        tunnel("circle_12k", circle, 0.0129, 0.28, 3.0)
    if "ellipse_holdall" in which:
        tunnel("ellipse_holdall", ellipse, 0.04, 0.5, 2.5, holdall=True,
               tip_refine=([(-2.7, 0.0), (2.7, 0.0)], 0.01, 0.15))
