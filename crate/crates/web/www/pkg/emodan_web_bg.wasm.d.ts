/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_aligned_free: (a: number, b: number) => void;
export const __wbg_face_free: (a: number, b: number) => void;
export const align_face: (a: number, b: number, c: number, d: number) => [number, number, number];
export const aligned_angle_deg: (a: number) => number;
export const aligned_landmarks: (a: number) => [number, number];
export const aligned_residual: (a: number) => number;
export const aligned_rgba: (a: number) => [number, number];
export const aligned_scale: (a: number) => number;
export const coarse_emotion: (a: number) => [number, number, number, number];
export const emotion_names: () => [number, number];
export const face_gray: (a: number) => [number, number];
export const face_landmarks: (a: number) => [number, number];
export const face_rgba: (a: number) => [number, number];
export const landmark_heatmap: (a: number, b: number, c: number) => [number, number, number, number];
export const render_face: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_drop_slice: (a: number, b: number) => void;
export const __wbindgen_start: () => void;
