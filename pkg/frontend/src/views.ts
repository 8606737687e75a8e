// Pure presentation helpers. No fetching, no state: payload in, strings and
// flags out, so these are unit-testable without a DOM or a server.

import type { Member, Post, TallyRow } from "./api.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function memberInitials(name: string): string {
  const parts = name.trim().split(/\s+/).filter(Boolean);
  if (parts.length === 0) return "?";
  const first = parts[0][0] ?? "?";
  const last = parts.length > 1 ? parts[parts.length - 1][0] : "";
  return (first + last).toUpperCase();
}

export interface TallyRowView {
  permission: string;
  description: string;
  grantedLabel: string; // e.g. "2 of 3 Granted"
  deniedLabel: string;
  showGranted: boolean; // whether the green side is rendered at all
  showDenied: boolean;
}

// The word "Granted" renders green and "Denied" renders red; a side is shown
// only when at least one in-scope installer decided that way.
export function tallyRowView(row: TallyRow): TallyRowView {
  return {
    permission: row.permission,
    description: row.description,
    grantedLabel: `${row.granted_count} of ${row.total} Granted`,
    deniedLabel: `${row.denied_count} of ${row.total} Denied`,
    showGranted: row.granted_count >= 1,
    showDenied: row.denied_count >= 1,
  };
}

export function installedBadge(viewerInstalled: boolean): string {
  return viewerInstalled ? "Installed" : "";
}

export function authorName(
  authorId: string,
  members: Pick<Member, "member_id" | "display_name">[],
): string {
  if (authorId === "system") return "Pro tips";
  const member = members.find((m) => m.member_id === authorId);
  return member ? member.display_name : "former member";
}

export function likeLabel(post: Pick<Post, "like_count" | "viewer_liked">): string {
  const heart = post.viewer_liked ? "♥" : "♡";
  return `${heart} ${post.like_count}`;
}

export function shortTime(iso: string): string {
  const date = new Date(iso);
  if (Number.isNaN(date.getTime())) return "";
  return date.toISOString().slice(0, 16).replace("T", " ");
}
