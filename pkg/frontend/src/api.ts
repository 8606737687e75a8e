// Typed client for the oversight server. Every UI action funnels through
// exactly one of these calls; the client renders responses verbatim and
// performs no masking of its own.

export interface Community {
  community_id: string;
  name: string;
  invite_code: string;
  created_at: string;
}

export interface Me {
  member_id: string;
  display_name: string;
  communities: Community[];
}

export interface Member {
  member_id: string;
  display_name: string;
  community_id: string;
  avatar_ref: string | null;
}

export interface AppRow {
  package: string;
  label: string;
  installer_count: number;
  viewer_installed: boolean;
}

export interface CatalogApp {
  package: string;
  label: string;
  visibility?: "visible" | "hidden";
  permissions: { name: string; decision: "granted" | "denied" }[];
}

export interface TallyRow {
  permission: string;
  description: string;
  granted_count: number;
  denied_count: number;
  total: number;
}

export interface Reply {
  reply_id: number;
  post_id: number;
  author: string;
  body: string;
  created_at: string;
}

export interface Post {
  post_id: number;
  community_id: string;
  author: string;
  body: string;
  created_at: string;
  like_count: number;
  is_pro_tip: boolean;
  viewer_liked: boolean;
  replies: Reply[];
}

export interface Message {
  message_id: number;
  sender: string;
  recipient: string;
  body: string;
  created_at: string;
  read_at: string | null;
}

export interface NotificationEvent {
  event_id: number;
  kind: string;
  payload: Record<string, string | number>;
  created_at: string;
}

export class ApiError extends Error {
  constructor(public code: string, message: string, public status: number) {
    super(message);
  }
}

export class ApiClient {
  constructor(private base: string, private token: string) {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
    params?: Record<string, string>,
  ): Promise<T> {
    let url = this.base + path;
    if (params) {
      url += "?" + new URLSearchParams(params).toString();
    }
    const resp = await fetch(url, {
      method,
      headers: {
        "Content-Type": "application/json",
        ...(this.token ? { Authorization: `Bearer ${this.token}` } : {}),
      },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const data = await resp.json();
    if (!resp.ok) {
      throw new ApiError(data.code ?? "http_error", data.message ?? "request failed", resp.status);
    }
    return data as T;
  }

  me(): Promise<Me> {
    return this.request("GET", "/v1/me");
  }

  members(communityId: string): Promise<{ members: Member[] }> {
    return this.request("GET", `/v1/communities/${communityId}/members`);
  }

  communityApps(communityId: string): Promise<{ apps: AppRow[] }> {
    return this.request("GET", `/v1/communities/${communityId}/apps`);
  }

  memberApps(communityId: string, memberId: string): Promise<{ member_id: string; apps: CatalogApp[] }> {
    return this.request("GET", `/v1/communities/${communityId}/members/${memberId}/apps`);
  }

  permissionTally(
    communityId: string,
    pkg: string,
    filter: "all" | "granted" | "denied",
    scope = "community",
  ): Promise<{ package: string; permissions: TallyRow[] }> {
    return this.request(
      "GET",
      `/v1/communities/${communityId}/apps/${encodeURIComponent(pkg)}/permissions`,
      undefined,
      { scope, filter },
    );
  }

  setVisibility(pkg: string, visibility: "visible" | "hidden"): Promise<{ version: number }> {
    return this.request("PUT", `/v1/catalog/${encodeURIComponent(pkg)}/visibility`, { visibility });
  }

  feed(communityId: string): Promise<{ posts: Post[] }> {
    return this.request("GET", `/v1/communities/${communityId}/feed`);
  }

  createPost(communityId: string, body: string): Promise<Post> {
    return this.request("POST", `/v1/communities/${communityId}/feed`, { body });
  }

  toggleLike(postId: number): Promise<{ post_id: number; like_count: number; liked: boolean }> {
    return this.request("POST", `/v1/feed/${postId}/likes`);
  }

  reply(postId: number, body: string): Promise<Reply> {
    return this.request("POST", `/v1/feed/${postId}/replies`, { body });
  }

  messages(memberId: string): Promise<{ messages: Message[] }> {
    return this.request("GET", `/v1/messages/${memberId}`);
  }

  sendMessage(memberId: string, body: string): Promise<Message> {
    return this.request("POST", `/v1/messages/${memberId}`, { body });
  }

  notifications(after: number, waitMs = 0): Promise<{ events: NotificationEvent[] }> {
    return this.request("GET", "/v1/notifications", undefined, {
      after: String(after),
      wait_ms: String(waitMs),
    });
  }

  ack(upToEventId: number): Promise<{ acked: number }> {
    return this.request("POST", "/v1/notifications/ack", { up_to_event_id: upToEventId });
  }

  recordUsage(action: string): void {
    // Fire and forget; telemetry must never break the UI.
    this.request("POST", "/v1/telemetry", { action }).catch(() => {});
  }
}
