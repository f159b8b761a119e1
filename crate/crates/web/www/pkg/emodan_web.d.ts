/* tslint:disable */
/* eslint-disable */

/**
 * The face warped back onto the neutral template.
 */
export class Aligned {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    landmarks(): Float64Array;
    rgba(): Uint8Array;
    /**
     * Estimated pose rotation, undone by the alignment.
     */
    readonly angle_deg: number;
    /**
     * Inter-pupil normalised distance between the aligned landmarks and the template:
     * what remains once pose is removed is the expression.
     */
    readonly residual: number;
    /**
     * Estimated pose scale relative to the template.
     */
    readonly scale: number;
}

/**
 * Rendered face with its ground-truth landmarks.
 */
export class Face {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * One byte per pixel, the form [`align_face`] takes back.
     */
    gray(): Uint8Array;
    landmarks(): Float64Array;
    rgba(): Uint8Array;
}

export function align_face(gray: Uint8Array, landmarks: Float64Array): Aligned;

/**
 * Positive, negative or neutral, with `surprised` counted as positive.
 */
export function coarse_emotion(emotion: number): string;

export function emotion_names(): string[];

/**
 * Heatmap of `landmarks` as RGBA, brightest on the points.
 */
export function landmark_heatmap(landmarks: Float64Array, sigma: number): Uint8Array;

export function render_face(emotion: number, strength: number, angle_deg: number, scale: number, shift_x: number, shift_y: number): Face;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_aligned_free: (a: number, b: number) => void;
    readonly __wbg_face_free: (a: number, b: number) => void;
    readonly align_face: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly aligned_angle_deg: (a: number) => number;
    readonly aligned_landmarks: (a: number) => [number, number];
    readonly aligned_residual: (a: number) => number;
    readonly aligned_rgba: (a: number) => [number, number];
    readonly aligned_scale: (a: number) => number;
    readonly coarse_emotion: (a: number) => [number, number, number, number];
    readonly emotion_names: () => [number, number];
    readonly face_gray: (a: number) => [number, number];
    readonly face_landmarks: (a: number) => [number, number];
    readonly face_rgba: (a: number) => [number, number];
    readonly landmark_heatmap: (a: number, b: number, c: number) => [number, number, number, number];
    readonly render_face: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_drop_slice: (a: number, b: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
