/**
 * Viewer state: which slice of which job is on screen. Pure data + clamping
 * rules so the control logic is testable without a DOM.
 */
import type { Axis, Modality } from "./api.js";

export interface StudyViewState {
  jobId: string;
  dims: [number, number, number]; // (nx, ny, nz), matching the volume order
  modalities: Modality[];
  channel: Modality;
  axis: Axis;
  index: number;
  overlayOn: boolean;
  alpha: number;
}

/** Slice count along a viewing axis; must mirror the backend mapping. */
export function axisLength(dims: [number, number, number], axis: Axis): number {
  switch (axis) {
    case "axial":
      return dims[2];
    case "coronal":
      return dims[1];
    case "sagittal":
      return dims[0];
  }
}

export function midSlice(dims: [number, number, number], axis: Axis): number {
  return Math.floor(axisLength(dims, axis) / 2);
}

export function clampIndex(state: StudyViewState, index: number): number {
  const n = axisLength(state.dims, state.axis);
  return Math.min(Math.max(Math.trunc(index), 0), n - 1);
}

export function clampAlpha(alpha: number): number {
  return Math.min(Math.max(alpha, 0), 1);
}

export function newStudyView(
  jobId: string,
  dims: [number, number, number],
  modalities: Modality[],
): StudyViewState {
  return {
    jobId,
    dims,
    modalities,
    channel: modalities[0],
    axis: "axial",
    index: midSlice(dims, "axial"), // viewer opens at the middle axial slice
    overlayOn: true,
    alpha: 0.5,
  };
}

/** Axis switches jump back to the middle slice of the new axis. */
export function withAxis(state: StudyViewState, axis: Axis): StudyViewState {
  return { ...state, axis, index: midSlice(state.dims, axis) };
}

export function withIndex(state: StudyViewState, index: number): StudyViewState {
  return { ...state, index: clampIndex(state, index) };
}

export function withAlpha(state: StudyViewState, alpha: number): StudyViewState {
  return { ...state, alpha: clampAlpha(alpha) };
}

export function withOverlay(state: StudyViewState, on: boolean): StudyViewState {
  return { ...state, overlayOn: on };
}

export function withChannel(state: StudyViewState, channel: Modality): StudyViewState {
  return { ...state, channel };
}
