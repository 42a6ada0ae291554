/** Thin fetch wrappers over the review-service endpoints. */

import type {
  BadCaseSample,
  ClusterView,
  ReviewPayload,
  SubmitRejection,
  SubmitSuccess,
} from "./types";

export class ServiceError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
  }
}

async function getJson<T>(url: string): Promise<T> {
  const response = await fetch(url);
  if (!response.ok) {
    throw new ServiceError(`GET ${url} -> ${response.status}`, response.status);
  }
  return (await response.json()) as T;
}

export function fetchStatus(): Promise<{ pending_iteration: number | null }> {
  return getJson("/api/status");
}

export function fetchClusters(iteration: number): Promise<ClusterView[]> {
  return getJson(`/iterations/${iteration}/clusters`);
}

export function fetchSamples(iteration: number, clusterId: string): Promise<BadCaseSample[]> {
  return getJson(`/iterations/${iteration}/clusters/${clusterId}/samples`);
}

export type SubmitOutcome =
  | { kind: "accepted"; body: SubmitSuccess }
  | { kind: "rejected"; body: SubmitRejection }
  | { kind: "conflict"; detail: string };

export async function submitReview(
  iteration: number,
  payload: ReviewPayload,
): Promise<SubmitOutcome> {
  const response = await fetch(`/iterations/${iteration}/review`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(payload),
  });
  if (response.status === 200) {
    return { kind: "accepted", body: (await response.json()) as SubmitSuccess };
  }
  if (response.status === 422) {
    return { kind: "rejected", body: (await response.json()) as SubmitRejection };
  }
  if (response.status === 409) {
    const body = await response.json().catch(() => ({ detail: "conflict" }));
    return { kind: "conflict", detail: String(body.detail ?? "review already applied") };
  }
  throw new ServiceError(`POST review -> ${response.status}`, response.status);
}
