/* tslint:disable */
/* eslint-disable */

/**
 * Pairs `(l(theta, u), l(theta', u'))` where `theta'` perturbs `theta` and
 * `u'` is a Crank-Nicolson move of `u` with correlation `rho`. Returned
 * interleaved.
 */
export function correlated_pairs(rho: number, particles: number, reps: number, n_obs: number, seed: bigint): Float64Array;

/**
 * Log-likelihood estimates minus the exact Kalman value, one per replicate.
 */
export function loglik_spread(filter: string, particles: number, reps: number, n_obs: number, sigma_e: number, seed: bigint): Float64Array;

/**
 * Simulated OU paths with random effects drawn around `(theta1, theta2,
 * theta3)`; row `i` holds unit `i`'s `n_obs` observations.
 */
export function simulate_paths(units: number, n_obs: number, theta1: number, theta2: number, theta3: number, sigma_e: number, seed: bigint): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly correlated_pairs: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly loglik_spread: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number, number];
    readonly simulate_paths: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
